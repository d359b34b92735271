//! Stereo to 7-channel pseudo-ambisonic feature extraction.
//!
//! Stereo is mapped to W/Y (mid/side) with X and Z held at zero, each
//! channel gets a log-mel spectrogram, and W is combined with X/Y/Z into
//! mel-averaged normalized intensity vectors.

mod extract;
mod foa;
mod io;
mod mel;
mod stft;
mod wav;

pub use extract::{
    extract_features, intensity_vectors, Extractor, FeatureConfig, FeatureTensor, FEATURE_CHANNELS,
    INTENSITY_EPS, INTENSITY_OFFSET,
};
pub use foa::{stereo_to_pseudo_foa, PseudoFoaClip, StereoClip};
pub use io::{decode_features, encode_features, read_features, write_features, Dtype, FEATURE_MAGIC, FEATURE_VERSION};
pub use mel::{hz_to_mel, log_mel, mel_to_hz, MelConfig, MelFilterbank, LOG_EPS};
pub use stft::{hann_periodic, stft, Spectrogram, StftConfig};
pub use wav::{read_stereo_wav, resample_linear, write_stereo_wav};
