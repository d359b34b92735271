use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SeldError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StftConfig {
    pub sample_rate: u32,
    pub win_length: usize,
    pub hop_length: usize,
    pub fft_size: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            sample_rate: 24_000,
            win_length: 960,
            hop_length: 480,
            fft_size: 1024,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.sample_rate > 0
            && self.hop_length > 0
            && self.hop_length <= self.win_length
            && self.fft_size.is_power_of_two()
            && self.fft_size >= self.win_length;
        if ok {
            Ok(())
        } else {
            Err(SeldError::Config(format!(
                "stft needs 0 < hop <= win <= fft (fft a power of two): {self:?}"
            )))
        }
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Frames a signal of `len` samples produces: frame `t` covers
    /// `[t*hop, t*hop + win)` and must fit entirely.
    pub fn num_frames(&self, len: usize) -> usize {
        if len < self.win_length {
            0
        } else {
            (len - self.win_length) / self.hop_length + 1
        }
    }

    /// Center frequency of bin `k` in Hz.
    pub fn bin_hz(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / self.fft_size as f64
    }
}

/// Periodic Hann window of length `n`.
pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// One-sided complex spectrogram, row-major `[frames, bins]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    pub frames: usize,
    pub bins: usize,
    pub data: Vec<Complex64>,
}

impl Spectrogram {
    pub fn frame(&self, t: usize) -> &[Complex64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }
}

pub fn stft(signal: &[f64], cfg: &StftConfig) -> Result<Spectrogram> {
    cfg.validate()?;
    let frames = cfg.num_frames(signal.len());
    if frames == 0 {
        return Err(SeldError::InvalidArgument(format!(
            "signal of {} samples is shorter than one {}-sample window",
            signal.len(),
            cfg.win_length
        )));
    }
    let window = hann_periodic(cfg.win_length);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.fft_size);
    let bins = cfg.bins();
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_size];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut data = Vec::with_capacity(frames * bins);
    for t in 0..frames {
        let start = t * cfg.hop_length;
        buf.fill(Complex64::new(0.0, 0.0));
        for (i, (&s, &w)) in signal[start..start + cfg.win_length].iter().zip(&window).enumerate() {
            buf[i] = Complex64::new(s * w, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        data.extend_from_slice(&buf[..bins]);
    }
    Ok(Spectrogram { frames, bins, data })
}
