use serde::{Deserialize, Serialize};

use super::stft::{Spectrogram, StftConfig};
use crate::error::{Result, SeldError};

/// Floor added before taking log10 of mel power.
pub const LOG_EPS: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MelConfig {
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            n_mels: 64,
            fmin: 50.0,
            fmax: 12_000.0,
        }
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters with unit peak, row-major `[n_mels, bins]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MelFilterbank {
    pub n_mels: usize,
    pub bins: usize,
    pub weights: Vec<f64>,
    /// Center frequency of each band in Hz.
    pub centers: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(mel: &MelConfig, stft: &StftConfig) -> Result<Self> {
        stft.validate()?;
        let nyquist = stft.sample_rate as f64 / 2.0;
        if mel.n_mels == 0 || !(0.0 <= mel.fmin && mel.fmin < mel.fmax && mel.fmax <= nyquist) {
            return Err(SeldError::Config(format!(
                "mel bands need n_mels > 0 and 0 <= fmin < fmax <= {nyquist}: {mel:?}"
            )));
        }
        let (lo, hi) = (hz_to_mel(mel.fmin), hz_to_mel(mel.fmax));
        let edges: Vec<f64> = (0..mel.n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (mel.n_mels + 1) as f64))
            .collect();
        let bins = stft.bins();
        let mut weights = vec![0.0; mel.n_mels * bins];
        for m in 0..mel.n_mels {
            let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
            for k in 0..bins {
                let f = stft.bin_hz(k);
                let rise = (f - left) / (center - left);
                let fall = (right - f) / (right - center);
                weights[m * bins + k] = rise.min(fall).max(0.0);
            }
        }
        let fb = Self {
            n_mels: mel.n_mels,
            bins,
            weights,
            centers: edges[1..=mel.n_mels].to_vec(),
        };
        if let Some(m) = (0..fb.n_mels).find(|&m| fb.row(m).iter().sum::<f64>() <= 0.0) {
            return Err(SeldError::Config(format!(
                "mel band {m} covers no fft bin; use fewer bands or a larger fft"
            )));
        }
        Ok(fb)
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.bins..(m + 1) * self.bins]
    }

    /// Projects per-bin values `[frames, bins]` onto the bands `[frames, n_mels]`.
    pub fn project(&self, values: &[f64], frames: usize) -> Vec<f64> {
        let mut out = vec![0.0; frames * self.n_mels];
        for t in 0..frames {
            let v = &values[t * self.bins..(t + 1) * self.bins];
            for m in 0..self.n_mels {
                out[t * self.n_mels + m] = self.row(m).iter().zip(v).map(|(w, x)| w * x).sum();
            }
        }
        out
    }
}

/// `log10(mel power + LOG_EPS)`, row-major `[frames, n_mels]`.
pub fn log_mel(spec: &Spectrogram, fb: &MelFilterbank) -> Result<Vec<f64>> {
    if spec.bins != fb.bins {
        return Err(SeldError::Shape {
            op: "log_mel",
            detail: format!("spectrogram has {} bins, filterbank {}", spec.bins, fb.bins),
        });
    }
    let power: Vec<f64> = spec.data.iter().map(|c| c.norm_sqr()).collect();
    Ok(fb.project(&power, spec.frames).into_iter().map(|p| (p + LOG_EPS).log10()).collect())
}
