use std::io::Cursor;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::foa::StereoClip;
use crate::error::{Result, SeldError};
use crate::fsio::write_atomic;

/// Linear-interpolation resampling.
pub fn resample_linear(x: &[f64], from: u32, to: u32) -> Vec<f64> {
    if from == to || x.is_empty() {
        return x.to_vec();
    }
    let out_len = ((x.len() as u128 * to as u128 + from as u128 / 2) / from as u128) as usize;
    let ratio = from as f64 / to as f64;
    (0..out_len)
        .map(|i| {
            let pos = i as f64 * ratio;
            let j = pos.floor() as usize;
            if j + 1 >= x.len() {
                return x[x.len() - 1];
            }
            let frac = pos - j as f64;
            x[j] + frac * (x[j + 1] - x[j])
        })
        .collect()
}

/// Reads a 2-channel WAV (integer PCM or 32-bit float) and resamples it to
/// `target_rate`.
pub fn read_stereo_wav(path: &Path, target_rate: u32) -> Result<StereoClip> {
    let mut reader = WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 2 {
        return Err(SeldError::Format {
            what: "wav",
            detail: format!("{}: expected 2 channels, found {}", path.display(), spec.channels),
        });
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()?,
        (SampleFormat::Int, bits @ 8..=32) => {
            let scale = (1u64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()?
        }
        (fmt, bits) => {
            return Err(SeldError::Format {
                what: "wav",
                detail: format!("{}: unsupported sample format {fmt:?}/{bits} bits", path.display()),
            })
        }
    };
    let left: Vec<f64> = samples.iter().step_by(2).copied().collect();
    let right: Vec<f64> = samples.iter().skip(1).step_by(2).copied().collect();
    StereoClip::new(
        resample_linear(&left, spec.sample_rate, target_rate),
        resample_linear(&right, spec.sample_rate, target_rate),
        target_rate,
    )
}

/// Writes the clip as 32-bit float stereo.
pub fn write_stereo_wav(path: &Path, clip: &StereoClip) -> Result<()> {
    let spec = WavSpec {
        channels: 2,
        sample_rate: clip.sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut buf = Cursor::new(Vec::new());
    {
        let mut w = WavWriter::new(&mut buf, spec)?;
        for (l, r) in clip.left.iter().zip(&clip.right) {
            w.write_sample(*l as f32)?;
            w.write_sample(*r as f32)?;
        }
        w.finalize()?;
    }
    write_atomic(path, buf.get_ref())
}
