//! C ABI over the seld model.
//!
//! Every fallible function returns a [`SeldStatus`]; on failure the message
//! is available from [`seld_last_error_message`] on the same thread. Models
//! are opaque handles created by [`seld_model_load`] and released with
//! [`seld_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use seld::labels::fold_azimuth;
use seld::model::{load_checkpoint, SeldModel};
use seld::tensor::Tensor;
use seld::SeldError;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeldStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Shape = 5,
    Numerical = 6,
    Panic = 7,
}

/// Loaded network; opaque to C callers.
pub struct SeldModelHandle {
    model: SeldModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
}

fn status_of(e: &SeldError) -> SeldStatus {
    match e {
        SeldError::Io(_) => SeldStatus::Io,
        SeldError::Format { .. } | SeldError::Wav(_) | SeldError::Csv(_) | SeldError::Config(_) => SeldStatus::Format,
        SeldError::Shape { .. } => SeldStatus::Shape,
        SeldError::NonFinite(_) | SeldError::Domain { .. } => SeldStatus::Numerical,
        _ => SeldStatus::InvalidArgument,
    }
}

/// Runs `f`, recording errors and converting panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (SeldStatus, String)>) -> SeldStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SeldStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SeldStatus::Panic
        }
    }
}

fn lib_err(e: SeldError) -> (SeldStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (SeldStatus, String) {
    (SeldStatus::NullPointer, format!("{what} is null"))
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn seld_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn seld_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Folds an azimuth in degrees into the frontal range [-90, 90].
#[no_mangle]
pub extern "C" fn seld_fold_azimuth(azimuth_deg: f64) -> f64 {
    fold_azimuth(azimuth_deg)
}

/// Loads a checkpoint file. On success `*out` owns a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn seld_model_load(path: *const c_char, out: *mut *mut SeldModelHandle) -> SeldStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let path = unsafe { CStr::from_ptr(path) }
            .to_str()
            .map_err(|_| (SeldStatus::InvalidArgument, "path is not UTF-8".to_string()))?;
        let model = load_checkpoint(Path::new(path)).map_err(lib_err)?;
        let handle = Box::into_raw(Box::new(SeldModelHandle { model }));
        unsafe { *out = handle };
        Ok(())
    })
}

/// Releases a handle from [`seld_model_load`]. Null is ignored.
///
/// # Safety
/// `model` must come from [`seld_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn seld_model_free(model: *mut SeldModelHandle) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Trainable parameter count.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn seld_model_num_params(model: *const SeldModelHandle, out: *mut usize) -> SeldStatus {
    guard(|| {
        let m = unsafe { model.as_ref() }.ok_or_else(|| null("model"))?;
        let out = unsafe { out.as_mut() }.ok_or_else(|| null("out"))?;
        *out = m.model.num_params();
        Ok(())
    })
}

/// Input layout `[batch, channels, frames, n_mels]` expected by
/// [`seld_model_infer`] and the output layout
/// `[batch, frames / time_downsample, tracks, classes, 3]`.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SeldModelInfo {
    pub channels: usize,
    pub n_mels: usize,
    pub time_downsample: usize,
    pub tracks: usize,
    pub classes: usize,
}

/// Describes the tensor layouts of a model.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn seld_model_info(model: *const SeldModelHandle, out: *mut SeldModelInfo) -> SeldStatus {
    guard(|| {
        let m = unsafe { model.as_ref() }.ok_or_else(|| null("model"))?;
        let out = unsafe { out.as_mut() }.ok_or_else(|| null("out"))?;
        let c = m.model.cfg();
        *out = SeldModelInfo {
            channels: c.in_channels,
            n_mels: c.n_mels,
            time_downsample: c.time_downsample(),
            tracks: c.tracks,
            classes: c.classes,
        };
        Ok(())
    })
}

/// Runs the network on `features` laid out `[batch, channels, frames,
/// n_mels]` (row-major) and writes `[batch, frames / time_downsample,
/// tracks, classes, 3]` into `out`, whose length must be exactly `out_len`.
///
/// # Safety
/// `features` must point to `batch * channels * frames * n_mels` doubles and
/// `out` to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn seld_model_infer(
    model: *const SeldModelHandle,
    features: *const f64,
    batch: usize,
    frames: usize,
    out: *mut f64,
    out_len: usize,
) -> SeldStatus {
    guard(|| {
        let m = unsafe { model.as_ref() }.ok_or_else(|| null("model"))?;
        if features.is_null() {
            return Err(null("features"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let c = m.model.cfg();
        if batch == 0 || frames == 0 {
            return Err((SeldStatus::InvalidArgument, "batch and frames must be positive".into()));
        }
        let out_frames = c.out_frames(frames).map_err(lib_err)?;
        let want = batch * out_frames * c.tracks * c.classes * 3;
        if out_len != want {
            return Err((SeldStatus::Shape, format!("output buffer holds {out_len} values, need {want}")));
        }
        let n_in = batch * c.in_channels * frames * c.n_mels;
        let data = unsafe { std::slice::from_raw_parts(features, n_in) }.to_vec();
        let x = Tensor::new([batch, c.in_channels, frames, c.n_mels], data).map_err(lib_err)?;
        let y = m.model.infer(&x).map_err(lib_err)?;
        unsafe { std::slice::from_raw_parts_mut(out, out_len) }.copy_from_slice(y.data());
        Ok(())
    })
}
