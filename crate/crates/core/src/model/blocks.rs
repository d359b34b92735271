use rand::Rng;

use crate::error::Result;
use crate::nn::{BatchNorm, Conv2d, Forward, Linear, ParamStore};
use crate::ssm::{MambaBlock, MambaBlockConfig};
use crate::tensor::Var;

/// Two 3x3 conv/norm/ReLU stages followed by average pooling.
#[derive(Clone, Debug)]
pub struct ConvBlock {
    pub conv1: Conv2d,
    pub bn1: BatchNorm,
    pub conv2: Conv2d,
    pub bn2: BatchNorm,
    pub pool: (usize, usize),
}

impl ConvBlock {
    pub fn new(store: &mut ParamStore, name: &str, c_in: usize, c_out: usize, pool: (usize, usize), rng: &mut impl Rng) -> Self {
        Self {
            conv1: Conv2d::new(store, &format!("{name}.conv1"), c_in, c_out, (3, 3), rng),
            bn1: BatchNorm::new(store, &format!("{name}.bn1"), c_out),
            conv2: Conv2d::new(store, &format!("{name}.conv2"), c_out, c_out, (3, 3), rng),
            bn2: BatchNorm::new(store, &format!("{name}.bn2"), c_out),
            pool,
        }
    }

    pub fn num_params(c_in: usize, c_out: usize) -> usize {
        Conv2d::num_params(c_in, c_out, (3, 3))
            + Conv2d::num_params(c_out, c_out, (3, 3))
            + 2 * BatchNorm::num_params(c_out)
    }

    /// `[B, c_in, T, F] -> [B, c_out, T / pt, F / pf]`
    pub fn forward(&self, fw: &mut Forward<'_, '_>, x: Var) -> Result<Var> {
        let h = self.conv1.forward(fw, x)?;
        let h = self.bn1.forward(fw, h)?;
        let h = fw.tape().relu(h);
        let h = self.conv2.forward(fw, h)?;
        let h = self.bn2.forward(fw, h)?;
        let h = fw.tape().relu(h);
        if self.pool == (1, 1) {
            Ok(h)
        } else {
            fw.tape().avg_pool2d(h, self.pool)
        }
    }

    pub fn macs(&self, t: usize, f: usize) -> u64 {
        self.conv1.macs(t, f) + self.conv2.macs(t, f)
    }
}

/// Frequency-axis `1 x k` conv then time-axis `k x 1` conv, each with
/// norm and ReLU, plus a residual connection. Works on `[B, C, T, F]`.
#[derive(Clone, Debug)]
pub struct AsymmetricConvBlock {
    pub freq_conv: Conv2d,
    pub freq_bn: BatchNorm,
    pub time_conv: Conv2d,
    pub time_bn: BatchNorm,
}

impl AsymmetricConvBlock {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize, k: usize, rng: &mut impl Rng) -> Self {
        Self {
            freq_conv: Conv2d::new(store, &format!("{name}.freq_conv"), channels, channels, (1, k), rng),
            freq_bn: BatchNorm::new(store, &format!("{name}.freq_bn"), channels),
            time_conv: Conv2d::new(store, &format!("{name}.time_conv"), channels, channels, (k, 1), rng),
            time_bn: BatchNorm::new(store, &format!("{name}.time_bn"), channels),
        }
    }

    pub fn num_params(channels: usize, k: usize) -> usize {
        2 * Conv2d::num_params(channels, channels, (1, k)) + 2 * BatchNorm::num_params(channels)
    }

    pub fn forward(&self, fw: &mut Forward<'_, '_>, x: Var) -> Result<Var> {
        let h = self.freq_conv.forward(fw, x)?;
        let h = self.freq_bn.forward(fw, h)?;
        let h = fw.tape().relu(h);
        let h = self.time_conv.forward(fw, h)?;
        let h = self.time_bn.forward(fw, h)?;
        let h = fw.tape().relu(h);
        fw.tape().add(h, x)
    }

    pub fn macs(&self, t: usize, f: usize) -> u64 {
        self.freq_conv.macs(t, f) + self.time_conv.macs(t, f)
    }
}

/// Forward and time-reversed Mamba branches fused by a linear map.
#[derive(Clone, Debug)]
pub struct BiMambaLayer {
    pub forward_block: MambaBlock,
    pub backward_block: MambaBlock,
    pub fusion: Linear,
}

impl BiMambaLayer {
    pub fn new(store: &mut ParamStore, name: &str, cfg: MambaBlockConfig, rng: &mut impl Rng) -> Result<Self> {
        let forward_block = MambaBlock::new(store, &format!("{name}.fwd"), cfg, rng)?;
        let backward_block = MambaBlock::new(store, &format!("{name}.bwd"), cfg, rng)?;
        let fusion = Linear::new(store, &format!("{name}.fusion"), 2 * cfg.d_model, cfg.d_model, true, rng);
        Ok(Self {
            forward_block,
            backward_block,
            fusion,
        })
    }

    pub fn num_params(cfg: &MambaBlockConfig) -> usize {
        2 * cfg.num_params() + Linear::num_params(2 * cfg.d_model, cfg.d_model, true)
    }

    /// `[B, L, d] -> [B, L, d]`
    pub fn forward(&self, fw: &mut Forward<'_, '_>, x: Var) -> Result<Var> {
        let time = fw.tape().shape(x).len() - 2;
        let fwd = self.forward_block.forward(fw, x)?;
        let rev = fw.tape().reverse(x, time)?;
        let bwd = self.backward_block.forward(fw, rev)?;
        let bwd = fw.tape().reverse(bwd, time)?;
        let cat = fw.tape().concat(&[fwd, bwd], time + 1)?;
        self.fusion.forward(fw, cat)
    }

    pub fn macs(cfg: &MambaBlockConfig, len: usize) -> u64 {
        2 * cfg.macs(len) + (2 * cfg.d_model * cfg.d_model * len) as u64
    }
}
