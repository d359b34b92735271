use serde::{Deserialize, Serialize};

use super::foa::{stereo_to_pseudo_foa, StereoClip};
use super::mel::{log_mel, MelConfig, MelFilterbank, LOG_EPS};
use super::stft::{stft, Spectrogram, StftConfig};
use crate::error::{Result, SeldError};
use crate::tensor::Tensor;

/// Log-mel channels (W, Y, X, Z) followed by intensity channels (x, y, z).
pub const FEATURE_CHANNELS: usize = 7;
/// Index of the first intensity channel.
pub const INTENSITY_OFFSET: usize = 4;
/// Denominator floor of the intensity normalization.
pub const INTENSITY_EPS: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    pub stft: StftConfig,
    pub mel: MelConfig,
    /// Frames per network input segment.
    pub segment_frames: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            stft: StftConfig::default(),
            mel: MelConfig::default(),
            segment_frames: 250,
        }
    }
}

/// One `[7, frames, n_mels]` network input. Frames at or past
/// `valid_frames` are padding with the values silence would produce.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTensor {
    pub tensor: Tensor,
    pub valid_frames: usize,
}

impl FeatureTensor {
    pub fn frames(&self) -> usize {
        self.tensor.shape()[1]
    }

    pub fn n_mels(&self) -> usize {
        self.tensor.shape()[2]
    }

    /// `[frames, n_mels]` plane of channel `c`.
    pub fn channel(&self, c: usize) -> &[f64] {
        let plane = self.frames() * self.n_mels();
        &self.tensor.data()[c * plane..(c + 1) * plane]
    }
}

/// Normalized active intensity per bin, mel-averaged per band:
/// `Re(conj(W) [X, Y, Z]) / (|W|^2 + (|X|^2 + |Y|^2 + |Z|^2) / 3 + eps)`.
/// Returns `[3, frames, n_mels]` row-major (x, y, z order).
pub fn intensity_vectors(
    w: &Spectrogram,
    x: &Spectrogram,
    y: &Spectrogram,
    z: &Spectrogram,
    fb: &MelFilterbank,
) -> Result<Vec<f64>> {
    let dims = (w.frames, w.bins);
    if [x, y, z].iter().any(|s| (s.frames, s.bins) != dims) || w.bins != fb.bins {
        return Err(SeldError::Shape {
            op: "intensity_vectors",
            detail: format!("spectrograms must share [{}, {}] and match {} filterbank bins", dims.0, dims.1, fb.bins),
        });
    }
    let n = w.data.len();
    let mut per_bin = vec![vec![0.0; n]; 3];
    for i in 0..n {
        let (wc, xc, yc, zc) = (w.data[i], x.data[i], y.data[i], z.data[i]);
        let norm = wc.norm_sqr() + (xc.norm_sqr() + yc.norm_sqr() + zc.norm_sqr()) / 3.0 + INTENSITY_EPS;
        for (axis, comp) in [xc, yc, zc].into_iter().enumerate() {
            per_bin[axis][i] = (wc.conj() * comp).re / norm;
        }
    }
    let row_sums: Vec<f64> = (0..fb.n_mels).map(|m| fb.row(m).iter().sum()).collect();
    let mut out = Vec::with_capacity(3 * w.frames * fb.n_mels);
    for values in &per_bin {
        let projected = fb.project(values, w.frames);
        out.extend(projected.iter().enumerate().map(|(i, v)| v / row_sums[i % fb.n_mels]));
    }
    Ok(out)
}

/// Feature extractor with a prebuilt filterbank.
#[derive(Clone, Debug)]
pub struct Extractor {
    pub cfg: FeatureConfig,
    pub fb: MelFilterbank,
}

impl Extractor {
    pub fn new(cfg: FeatureConfig) -> Result<Self> {
        if cfg.segment_frames == 0 {
            return Err(SeldError::Config("segment_frames must be positive".into()));
        }
        let fb = MelFilterbank::new(&cfg.mel, &cfg.stft)?;
        Ok(Self { cfg, fb })
    }

    /// Full-clip features, `[7, T, n_mels]` with every frame valid.
    pub fn clip_features(&self, clip: &StereoClip) -> Result<Tensor> {
        if clip.sample_rate != self.cfg.stft.sample_rate {
            return Err(SeldError::InvalidArgument(format!(
                "clip is at {} Hz, features expect {} Hz",
                clip.sample_rate, self.cfg.stft.sample_rate
            )));
        }
        let foa = stereo_to_pseudo_foa(clip);
        let specs: Vec<Spectrogram> = [&foa.w, &foa.y, &foa.x, &foa.z]
            .into_iter()
            .map(|s| stft(s, &self.cfg.stft))
            .collect::<Result<_>>()?;
        let frames = specs[0].frames;
        let mut data = Vec::with_capacity(FEATURE_CHANNELS * frames * self.fb.n_mels);
        for spec in &specs {
            data.extend(log_mel(spec, &self.fb)?);
        }
        // spectrograms are in W, Y, X, Z order; intensity wants (W, X, Y, Z)
        data.extend(intensity_vectors(&specs[0], &specs[2], &specs[1], &specs[3], &self.fb)?);
        Tensor::new([FEATURE_CHANNELS, frames, self.fb.n_mels], data)
    }

    /// Splits the clip into consecutive fixed-length segments; the last one
    /// is padded out to full length.
    pub fn extract(&self, clip: &StereoClip) -> Result<Vec<FeatureTensor>> {
        let full = self.clip_features(clip)?;
        let (frames, mels) = (full.shape()[1], full.shape()[2]);
        let seg = self.cfg.segment_frames;
        let floor = LOG_EPS.log10();
        let mut out = Vec::new();
        let mut start = 0;
        while start < frames {
            let valid = seg.min(frames - start);
            let mut data = Vec::with_capacity(FEATURE_CHANNELS * seg * mels);
            for c in 0..FEATURE_CHANNELS {
                let plane = &full.data()[c * frames * mels..(c + 1) * frames * mels];
                data.extend_from_slice(&plane[start * mels..(start + valid) * mels]);
                let pad = if c < INTENSITY_OFFSET { floor } else { 0.0 };
                data.resize(data.len() + (seg - valid) * mels, pad);
            }
            out.push(FeatureTensor {
                tensor: Tensor::new([FEATURE_CHANNELS, seg, mels], data)?,
                valid_frames: valid,
            });
            start += seg;
        }
        Ok(out)
    }
}

/// Convenience wrapper building a one-off [`Extractor`].
pub fn extract_features(clip: &StereoClip, cfg: &FeatureConfig) -> Result<Vec<FeatureTensor>> {
    Extractor::new(*cfg)?.extract(clip)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(len: usize, f: f64, amp: f64) -> Vec<f64> {
        (0..len)
            .map(|i| amp * (2.0 * std::f64::consts::PI * f * i as f64 / 24_000.0).sin())
            .collect()
    }

    #[test]
    fn short_clip_pads_one_segment() {
        let ex = Extractor::new(FeatureConfig::default()).unwrap();
        let clip = StereoClip::mono(tone(960 + 480 * 9, 440.0, 0.5), 24_000).unwrap();
        let segs = ex.extract(&clip).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].valid_frames, 10);
        assert_eq!(segs[0].tensor.shape(), &[7, 250, 64]);
        let floor = LOG_EPS.log10();
        assert!(segs[0].channel(0)[10 * 64..].iter().all(|&v| v == floor));
        assert!(segs[0].channel(5)[10 * 64..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn long_clip_splits_into_segments() {
        let ex = Extractor::new(FeatureConfig::default()).unwrap();
        let clip = StereoClip::mono(tone(960 + 480 * 299, 300.0, 0.2), 24_000).unwrap();
        let segs = ex.extract(&clip).unwrap();
        assert_eq!(segs.iter().map(|s| s.valid_frames).collect::<Vec<_>>(), vec![250, 50]);
    }

    #[test]
    fn wrong_rate_rejected() {
        let ex = Extractor::new(FeatureConfig::default()).unwrap();
        let clip = StereoClip::mono(vec![0.0; 2000], 48_000).unwrap();
        assert!(ex.extract(&clip).is_err());
    }
}
