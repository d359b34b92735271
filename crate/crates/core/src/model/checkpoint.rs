//! Model checkpoint files.
//!
//! Little-endian layout:
//!
//! ```text
//! magic      8 bytes "SELDCKPT"
//! version    u32     1
//! config_len u32     length of the JSON model config that follows
//! config     bytes   UTF-8 JSON of SeldModelConfig
//! count      u32     number of tensors
//! per tensor:
//!   name_len u32, name bytes (UTF-8)
//!   ndim     u32, dims u64 x ndim
//!   payload  f64 x product(dims)
//! ```
//!
//! Tensors appear in model registration order and include batch-norm
//! running statistics.

use std::path::Path;

use super::config::SeldModelConfig;
use super::network::SeldModel;
use crate::error::{Result, SeldError};
use crate::fsio::write_atomic;
use crate::nn::ParamStore;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SELDCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

fn format_err<T>(detail: impl Into<String>) -> Result<T> {
    Err(SeldError::Format {
        what: "checkpoint",
        detail: detail.into(),
    })
}

pub fn encode_checkpoint(model: &SeldModel) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(model.cfg()).map_err(|e| SeldError::Config(e.to_string()))?;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    let entries = model.params.entries();
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for e in entries {
        out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
        out.extend_from_slice(e.name.as_bytes());
        out.extend_from_slice(&(e.value.rank() as u32).to_le_bytes());
        for &d in e.value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in e.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len().saturating_sub(self.pos) < n {
            return format_err(format!("truncated at byte {}", self.pos));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> Result<usize> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()) as usize)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<SeldModel> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8)? != CHECKPOINT_MAGIC {
        return format_err("bad magic");
    }
    let version = c.u32()?;
    if version as u32 != CHECKPOINT_VERSION {
        return format_err(format!("unsupported version {version}"));
    }
    let len = c.u32()?;
    let cfg: SeldModelConfig = serde_json::from_slice(c.take(len)?).or_else(|e| format_err(format!("config: {e}")))?;
    let count = c.u32()?;
    let mut loaded = ParamStore::new();
    for _ in 0..count {
        let n = c.u32()?;
        let name = String::from_utf8(c.take(n)?.to_vec()).or_else(|_| format_err("tensor name is not UTF-8"))?;
        let ndim = c.u32()?;
        if ndim > 8 {
            return format_err(format!("{name}: unreasonable rank {ndim}"));
        }
        let dims: Vec<usize> = (0..ndim).map(|_| c.u64()).collect::<Result<_>>()?;
        let numel = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let Some(bytes_needed) = numel.and_then(|n| n.checked_mul(8)) else {
            return format_err(format!("{name}: dims overflow"));
        };
        let data = c
            .take(bytes_needed)?
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let t = Tensor::new(dims, data).or_else(|e| format_err(format!("{name}: {e}")))?;
        if loaded.find(&name).is_some() {
            return format_err(format!("duplicate tensor {name}"));
        }
        loaded.add(name, t);
    }
    if c.pos != bytes.len() {
        return format_err(format!("{} trailing bytes", bytes.len() - c.pos));
    }
    let mut model = SeldModel::new(&cfg, 0)?;
    model.params.load_from(&loaded)?;
    Ok(model)
}

pub fn save_checkpoint(path: &Path, model: &SeldModel) -> Result<()> {
    write_atomic(path, &encode_checkpoint(model)?)
}

pub fn load_checkpoint(path: &Path) -> Result<SeldModel> {
    decode_checkpoint(&std::fs::read(path)?)
}
