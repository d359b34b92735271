use rand::Rng;
use serde::{Deserialize, Serialize};

use super::selective::{bind_a, init_a_log, selective_scan, SelectiveProjections};
use crate::error::{Result, SeldError};
use crate::nn::{uniform, Forward, Linear, ParamId, ParamStore};
use crate::tensor::{Padding, Tensor, Var};

/// Width and state hyperparameters of one Mamba block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MambaBlockConfig {
    pub d_model: usize,
    pub d_state: usize,
    pub expand: usize,
    pub conv_kernel: usize,
}

impl MambaBlockConfig {
    pub fn new(d_model: usize) -> Self {
        Self {
            d_model,
            d_state: 16,
            expand: 2,
            conv_kernel: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.d_state == 0 || self.expand == 0 || self.conv_kernel == 0 {
            return Err(SeldError::Config(format!("mamba dimensions must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn d_inner(&self) -> usize {
        self.expand * self.d_model
    }

    /// Rank of the step-size projection, `ceil(d_model / 16)`.
    pub fn dt_rank(&self) -> usize {
        self.d_model.div_ceil(16)
    }

    pub fn num_params(&self) -> usize {
        let (d, di, n, k) = (self.d_model, self.d_inner(), self.d_state, self.conv_kernel);
        Linear::num_params(d, 2 * di, false)
            + di * k
            + di
            + SelectiveProjections::num_params(di, self.dt_rank(), n)
            + di * n
            + di
            + Linear::num_params(di, d, false)
    }

    /// Multiply-accumulates for a length-`len` sequence. Scan steps count
    /// one MAC per state update and one per readout.
    pub fn macs(&self, len: usize) -> u64 {
        let (d, di, n, k, r) = (self.d_model, self.d_inner(), self.d_state, self.conv_kernel, self.dt_rank());
        let per_step = d * 2 * di // in projection
            + di * k // depthwise conv
            + di * (r + 2 * n) // x projection
            + r * di // dt projection
            + 2 * di * n // state update + readout
            + di // gate
            + di * d; // out projection
        (per_step * len) as u64
    }
}

/// Causal selective state-space block with gated output and a residual
/// connection. Input and output are `[.., L, d_model]`.
#[derive(Clone, Debug)]
pub struct MambaBlock {
    pub cfg: MambaBlockConfig,
    pub in_proj: Linear,
    pub conv_weight: ParamId,
    pub conv_bias: ParamId,
    pub projections: SelectiveProjections,
    pub a_log: ParamId,
    pub d_skip: ParamId,
    pub out_proj: Linear,
}

impl MambaBlock {
    pub fn new(store: &mut ParamStore, name: &str, cfg: MambaBlockConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let di = cfg.d_inner();
        let in_proj = Linear::new(store, &format!("{name}.in_proj"), cfg.d_model, 2 * di, false, rng);
        let bound = 1.0 / (cfg.conv_kernel as f64).sqrt();
        let conv_weight = store.add(format!("{name}.conv.weight"), uniform(&[di, cfg.conv_kernel], bound, rng));
        let conv_bias = store.add(format!("{name}.conv.bias"), uniform(&[di], bound, rng));
        let projections = SelectiveProjections::new(store, name, di, cfg.dt_rank(), cfg.d_state, rng);
        let a_log = store.add(format!("{name}.a_log"), init_a_log(di, cfg.d_state));
        let d_skip = store.add(format!("{name}.d_skip"), Tensor::ones([di]));
        let out_proj = Linear::new(store, &format!("{name}.out_proj"), di, cfg.d_model, false, rng);
        Ok(Self {
            cfg,
            in_proj,
            conv_weight,
            conv_bias,
            projections,
            a_log,
            d_skip,
            out_proj,
        })
    }

    pub fn forward(&self, fw: &mut Forward<'_, '_>, x: Var) -> Result<Var> {
        let rank = fw.tape().shape(x).len();
        if rank < 2 || fw.tape().shape(x)[rank - 1] != self.cfg.d_model {
            return Err(SeldError::Shape {
                op: "mamba_block",
                detail: format!("expected [.., L, {}], got {:?}", self.cfg.d_model, fw.tape().shape(x)),
            });
        }
        let di = self.cfg.d_inner();
        let xz = self.in_proj.forward(fw, x)?;
        let (w, b) = (fw.param(self.conv_weight), fw.param(self.conv_bias));
        let tape = fw.tape();
        let value = tape.narrow(xz, rank - 1, 0, di)?;
        let gate = tape.narrow(xz, rank - 1, di, di)?;
        let conv = tape.depthwise_conv1d(value, w, Padding::Causal, rank - 2)?;
        let conv = tape.add_bias(conv, b)?;
        let u = tape.silu(conv);

        let proj = self.projections.forward(fw, u)?;
        let a = bind_a(fw, self.a_log);
        let d = fw.param(self.d_skip);
        let tape = fw.tape();
        let y = selective_scan(tape, u, proj.delta, a, proj.b, proj.c, d)?;
        let g = tape.silu(gate);
        let y = tape.mul(y, g)?;
        let out = self.out_proj.forward(fw, y)?;
        fw.tape().add(out, x)
    }
}
