#ifndef SELD_H
#define SELD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum SeldStatus {
  SELD_STATUS_OK = 0,
  SELD_STATUS_NULL_POINTER = 1,
  SELD_STATUS_INVALID_ARGUMENT = 2,
  SELD_STATUS_IO = 3,
  SELD_STATUS_FORMAT = 4,
  SELD_STATUS_SHAPE = 5,
  SELD_STATUS_NUMERICAL = 6,
  SELD_STATUS_PANIC = 7,
} SeldStatus;

/**
 * Loaded network; opaque to C callers.
 */
typedef struct SeldModelHandle SeldModelHandle;

/**
 * Input layout `[batch, channels, frames, n_mels]` expected by
 * [`seld_model_infer`] and the output layout
 * `[batch, frames / time_downsample, tracks, classes, 3]`.
 */
typedef struct SeldModelInfo {
  size_t channels;
  size_t n_mels;
  size_t time_downsample;
  size_t tracks;
  size_t classes;
} SeldModelInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on this thread.
 */
const char *seld_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *seld_version(void);

/**
 * Folds an azimuth in degrees into the frontal range [-90, 90].
 */
double seld_fold_azimuth(double azimuth_deg);

/**
 * Loads a checkpoint file. On success `*out` owns a new handle.
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string and `out` a valid pointer.
 */
enum SeldStatus seld_model_load(const char *path, struct SeldModelHandle **out);

/**
 * Releases a handle from [`seld_model_load`]. Null is ignored.
 *
 * # Safety
 * `model` must come from [`seld_model_load`] and not be used afterwards.
 */
void seld_model_free(struct SeldModelHandle *model);

/**
 * Trainable parameter count.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum SeldStatus seld_model_num_params(const struct SeldModelHandle *model, size_t *out);

/**
 * Describes the tensor layouts of a model.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum SeldStatus seld_model_info(const struct SeldModelHandle *model, struct SeldModelInfo *out);

/**
 * Runs the network on `features` laid out `[batch, channels, frames,
 * n_mels]` (row-major) and writes `[batch, frames / time_downsample,
 * tracks, classes, 3]` into `out`, whose length must be exactly `out_len`.
 *
 * # Safety
 * `features` must point to `batch * channels * frames * n_mels` doubles and
 * `out` to `out_len` writable doubles.
 */
enum SeldStatus seld_model_infer(const struct SeldModelHandle *model,
                                 const double *features,
                                 size_t batch,
                                 size_t frames,
                                 double *out,
                                 size_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SELD_H */
