use rand::Rng;

use super::params::{BnUpdate, Forward, Mode, ParamId, ParamStore};
use crate::error::Result;
use crate::tensor::{BatchNormMode, Tensor, Var};

pub(crate) fn uniform(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-bound..bound))
}

/// `y = x W + b` over the last axis; `W` is stored `[d_in, d_out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, bias: bool, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (d_in as f64).sqrt();
        let weight = store.add(format!("{name}.weight"), uniform(&[d_in, d_out], bound, rng));
        let bias = bias.then(|| store.add(format!("{name}.bias"), uniform(&[d_out], bound, rng)));
        Self {
            weight,
            bias,
            d_in,
            d_out,
        }
    }

    pub fn num_params(d_in: usize, d_out: usize, bias: bool) -> usize {
        d_in * d_out + if bias { d_out } else { 0 }
    }

    pub fn forward(&self, fw: &mut Forward<'_, '_>, x: Var) -> Result<Var> {
        let w = fw.param(self.weight);
        let y = fw.tape().matmul(x, w)?;
        match self.bias {
            Some(b) => {
                let b = fw.param(b);
                fw.tape().add_bias(y, b)
            }
            None => Ok(y),
        }
    }
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Batch normalization over axis 1 with learned affine parameters.
#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub channels: usize,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), Tensor::ones([channels])),
            beta: store.add(format!("{name}.beta"), Tensor::zeros([channels])),
            running_mean: store.add_buffer(format!("{name}.running_mean"), Tensor::zeros([channels])),
            running_var: store.add_buffer(format!("{name}.running_var"), Tensor::ones([channels])),
            channels,
        }
    }

    pub fn num_params(channels: usize) -> usize {
        2 * channels
    }

    pub fn forward(&self, fw: &mut Forward<'_, '_>, x: Var) -> Result<Var> {
        let (g, b) = (fw.param(self.gamma), fw.param(self.beta));
        match fw.mode() {
            Mode::Train => {
                let (y, stats) = fw.tape().batch_norm(x, g, b, BatchNormMode::Train { eps: BN_EPS })?;
                if let Some(stats) = stats {
                    fw.record_bn_update(BnUpdate {
                        mean: self.running_mean,
                        var: self.running_var,
                        stats,
                    });
                }
                Ok(y)
            }
            Mode::Eval => {
                let store = fw.store();
                let mean = store.get(self.running_mean).data();
                let var = store.get(self.running_var).data();
                let mode = BatchNormMode::Eval { mean, var, eps: BN_EPS };
                Ok(fw.tape().batch_norm(x, g, b, mode)?.0)
            }
        }
    }
}

/// Bias-free 2-D convolution with same padding.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: (usize, usize),
}

impl Conv2d {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: (usize, usize),
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = (c_in * kernel.0 * kernel.1) as f64;
        // He-uniform for ReLU networks
        let bound = (6.0 / fan_in).sqrt();
        let weight = store.add(
            format!("{name}.weight"),
            uniform(&[c_out, c_in, kernel.0, kernel.1], bound, rng),
        );
        Self {
            weight,
            c_in,
            c_out,
            kernel,
        }
    }

    pub fn num_params(c_in: usize, c_out: usize, kernel: (usize, usize)) -> usize {
        c_in * c_out * kernel.0 * kernel.1
    }

    pub fn forward(&self, fw: &mut Forward<'_, '_>, x: Var) -> Result<Var> {
        let w = fw.param(self.weight);
        fw.tape().conv2d(x, w)
    }

    /// Multiply-accumulates for one `[c_in, h, w]` input.
    pub fn macs(&self, h: usize, w: usize) -> u64 {
        (self.c_in * self.c_out * self.kernel.0 * self.kernel.1 * h * w) as u64
    }
}
