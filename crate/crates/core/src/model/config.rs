use serde::{Deserialize, Serialize};

use crate::error::{Result, SeldError};
use crate::labels::AccdoaConfig;
use crate::ssm::MambaBlockConfig;

/// Number of convolutional blocks in the encoder.
pub const ENCODER_BLOCKS: usize = 6;

/// Architecture of the encoder/decoder network.
///
/// The decoder width is not a free parameter: the encoder's output map
/// `[last channel width, frames, remaining mel bins]` is flattened per frame,
/// so `d_model = encoder_channels[5] * n_mels / prod(freq_pools)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeldModelConfig {
    pub in_channels: usize,
    pub n_mels: usize,
    pub encoder_channels: Vec<usize>,
    pub time_pools: Vec<usize>,
    pub freq_pools: Vec<usize>,
    pub decoder_layers: usize,
    pub use_asymmetric_conv: bool,
    pub asym_kernel: usize,
    pub d_state: usize,
    pub expand: usize,
    pub conv_kernel: usize,
    pub tracks: usize,
    pub classes: usize,
    pub distance_scale: f64,
}

impl Default for SeldModelConfig {
    /// Desk-scale default.
    fn default() -> Self {
        Self {
            in_channels: 7,
            n_mels: 64,
            encoder_channels: vec![16, 32, 64, 64, 128, 128],
            time_pools: vec![5, 1, 1, 1, 1, 1],
            freq_pools: vec![2, 2, 2, 2, 2, 1],
            decoder_layers: 2,
            use_asymmetric_conv: true,
            asym_kernel: 3,
            d_state: 16,
            expand: 2,
            conv_kernel: 4,
            tracks: 3,
            classes: 13,
            distance_scale: 10.0,
        }
    }
}

impl SeldModelConfig {
    /// Small network used for overfitting checks and fast tests.
    pub fn toy() -> Self {
        Self {
            encoder_channels: vec![8, 8, 16, 16, 16, 16],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(SeldError::Config(m));
        for (name, v) in [
            ("encoder_channels", &self.encoder_channels),
            ("time_pools", &self.time_pools),
            ("freq_pools", &self.freq_pools),
        ] {
            if v.len() != ENCODER_BLOCKS {
                return err(format!("model.{name} needs {ENCODER_BLOCKS} entries, got {}", v.len()));
            }
            if v.contains(&0) {
                return err(format!("model.{name} entries must be positive"));
            }
        }
        let fp: usize = self.freq_pools.iter().product();
        if self.n_mels % fp != 0 {
            return err(format!("model.n_mels {} is not divisible by prod(freq_pools) {fp}", self.n_mels));
        }
        if self.asym_kernel % 2 == 0 {
            return err(format!("model.asym_kernel must be odd, got {}", self.asym_kernel));
        }
        if self.in_channels == 0 || self.tracks == 0 || self.classes == 0 || !(self.distance_scale > 0.0) {
            return err("model.in_channels, tracks, classes and distance_scale must be positive".into());
        }
        self.mamba().validate()
    }

    pub fn time_downsample(&self) -> usize {
        self.time_pools.iter().product()
    }

    /// Mel bins left after the encoder.
    pub fn out_freq(&self) -> usize {
        self.n_mels / self.freq_pools.iter().product::<usize>()
    }

    pub fn enc_channels(&self) -> usize {
        self.encoder_channels[ENCODER_BLOCKS - 1]
    }

    pub fn d_model(&self) -> usize {
        self.enc_channels() * self.out_freq()
    }

    pub fn mamba(&self) -> MambaBlockConfig {
        MambaBlockConfig {
            d_model: self.d_model(),
            d_state: self.d_state,
            expand: self.expand,
            conv_kernel: self.conv_kernel,
        }
    }

    pub fn accdoa(&self) -> AccdoaConfig {
        AccdoaConfig {
            tracks: self.tracks,
            classes: self.classes,
            distance_scale: self.distance_scale,
        }
    }

    /// Output frames for `frames` input frames; the input must divide evenly.
    pub fn out_frames(&self, frames: usize) -> Result<usize> {
        let ds = self.time_downsample();
        if frames == 0 || frames % ds != 0 {
            return Err(SeldError::InvalidArgument(format!(
                "input of {frames} frames is not a positive multiple of the {ds}x time downsampling"
            )));
        }
        Ok(frames / ds)
    }
}
