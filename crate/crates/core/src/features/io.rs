//! Binary feature files.
//!
//! Little-endian layout:
//!
//! ```text
//! magic        8 bytes  "SELDFEAT"
//! version      u32      1
//! dtype        u32      1 = f32, 2 = f64
//! ndim         u32
//! dims         u64 x ndim
//! valid_frames u64
//! payload      product(dims) values of dtype, row-major
//! ```

use std::path::Path;

use super::extract::FeatureTensor;
use crate::error::{Result, SeldError};
use crate::fsio::write_atomic;
use crate::tensor::Tensor;

pub const FEATURE_MAGIC: &[u8; 8] = b"SELDFEAT";
pub const FEATURE_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F32 = 1,
    F64 = 2,
}

fn format_err<T>(detail: impl Into<String>) -> Result<T> {
    Err(SeldError::Format {
        what: "feature file",
        detail: detail.into(),
    })
}

pub fn encode_features(f: &FeatureTensor, dtype: Dtype) -> Vec<u8> {
    let shape = f.tensor.shape();
    let width = if dtype == Dtype::F32 { 4 } else { 8 };
    let mut out = Vec::with_capacity(28 + 8 * shape.len() + width * f.tensor.numel());
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    out.extend_from_slice(&(dtype as u32).to_le_bytes());
    out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &d in shape {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    out.extend_from_slice(&(f.valid_frames as u64).to_le_bytes());
    for &v in f.tensor.data() {
        match dtype {
            Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return format_err(format!("truncated at byte {}", self.pos));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureTensor> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != FEATURE_MAGIC {
        return format_err("bad magic");
    }
    let version = r.u32()?;
    if version != FEATURE_VERSION {
        return format_err(format!("unsupported version {version}"));
    }
    let dtype = match r.u32()? {
        1 => Dtype::F32,
        2 => Dtype::F64,
        d => return format_err(format!("unknown dtype code {d}")),
    };
    let ndim = r.u32()? as usize;
    if ndim == 0 || ndim > 8 {
        return format_err(format!("unreasonable rank {ndim}"));
    }
    let dims: Vec<usize> = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<_>>()?;
    let valid_frames = r.u64()? as usize;
    let numel = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
    let width = if dtype == Dtype::F32 { 4 } else { 8 };
    let Some(numel) = numel.filter(|&n| n.checked_mul(width) == Some(bytes.len() - r.pos)) else {
        return format_err(format!("payload size does not match dims {dims:?}"));
    };
    let payload = r.take(numel * width)?;
    let data: Vec<f64> = match dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    let tensor = Tensor::new(dims, data).or_else(|e| format_err(e.to_string()))?;
    if tensor.rank() >= 2 && valid_frames > tensor.shape()[1] {
        return format_err(format!("valid_frames {valid_frames} exceeds frame count"));
    }
    Ok(FeatureTensor { tensor, valid_frames })
}

pub fn write_features(path: &Path, f: &FeatureTensor) -> Result<()> {
    write_atomic(path, &encode_features(f, Dtype::F64))
}

pub fn read_features(path: &Path) -> Result<FeatureTensor> {
    decode_features(&std::fs::read(path)?)
}
