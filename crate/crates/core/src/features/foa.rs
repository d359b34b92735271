use crate::error::{shape_err, Result, SeldError};

/// Stereo PCM at a known sample rate.
#[derive(Clone, Debug, PartialEq)]
pub struct StereoClip {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub sample_rate: u32,
}

impl StereoClip {
    pub fn new(left: Vec<f64>, right: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if left.len() != right.len() {
            return shape_err(
                "StereoClip",
                format!("left has {} samples, right has {}", left.len(), right.len()),
            );
        }
        if let Some(bad) = left.iter().chain(&right).find(|v| !v.is_finite()) {
            return Err(SeldError::NonFinite(format!("sample value {bad}")));
        }
        Ok(Self {
            left,
            right,
            sample_rate,
        })
    }

    /// Duplicates one channel into both ears.
    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::new(samples.clone(), samples, sample_rate)
    }

    pub fn len(&self) -> usize {
        self.left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    /// Exchanges the left and right channels.
    pub fn swapped(&self) -> Self {
        Self {
            left: self.right.clone(),
            right: self.left.clone(),
            sample_rate: self.sample_rate,
        }
    }
}

/// First-order ambisonic channels reconstructed from stereo. X and Z carry
/// no information and are kept as explicit zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoFoaClip {
    pub w: Vec<f64>,
    pub y: Vec<f64>,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
}

/// Mid/side reconstruction: `W = (L + R) / 2`, `Y = (L - R) / 2`.
pub fn stereo_to_pseudo_foa(clip: &StereoClip) -> PseudoFoaClip {
    let w = clip.left.iter().zip(&clip.right).map(|(l, r)| 0.5 * (l + r)).collect();
    let y = clip.left.iter().zip(&clip.right).map(|(l, r)| 0.5 * (l - r)).collect();
    PseudoFoaClip {
        w,
        y,
        x: vec![0.0; clip.len()],
        z: vec![0.0; clip.len()],
    }
}
