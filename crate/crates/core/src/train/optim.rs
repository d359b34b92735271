use serde::{Deserialize, Serialize};

use crate::error::{Result, SeldError};
use crate::nn::{ParamId, ParamStore};
use crate::tensor::Tensor;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam with weight decay applied as an L2 term on the gradient.
#[derive(Clone, Debug)]
pub struct Adam {
    pub weight_decay: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(sizes: impl IntoIterator<Item = usize>, weight_decay: f64) -> Self {
        let sizes: Vec<usize> = sizes.into_iter().collect();
        Self {
            weight_decay,
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// State sized for every trainable tensor of `store`.
    pub fn for_store(store: &ParamStore, weight_decay: f64) -> Self {
        let sizes: Vec<usize> = store.trainable_ids().map(|id| store.get(id).numel()).collect();
        Self::new(sizes, weight_decay)
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Updates `params[i]` in place from `grads[i]`.
    pub fn update(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(SeldError::InvalidArgument(format!(
                "optimizer holds {} tensors, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.step as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.step as i32);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            if p.len() != g.len() || p.len() != self.m[i].len() {
                return Err(SeldError::InvalidArgument(format!("tensor {i}: parameter/gradient length mismatch")));
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for k in 0..p.len() {
                let gk = g[k] + self.weight_decay * p[k];
                m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * gk;
                v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * gk * gk;
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                p[k] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
            }
        }
        Ok(())
    }

    /// Applies one step to the trainable tensors of `store`. Missing
    /// gradients count as zero.
    pub fn step_store(&mut self, store: &mut ParamStore, grads: &[Option<Tensor>], lr: f64) -> Result<()> {
        let ids: Vec<ParamId> = store.trainable_ids().collect();
        let mut values: Vec<Tensor> = ids.iter().map(|&id| store.get(id).clone()).collect();
        let zero: Vec<Vec<f64>> = ids
            .iter()
            .map(|id| if grads[id.index()].is_none() { vec![0.0; store.get(*id).numel()] } else { Vec::new() })
            .collect();
        let g: Vec<&[f64]> = ids
            .iter()
            .zip(&zero)
            .map(|(id, z)| grads[id.index()].as_ref().map_or(z.as_slice(), |t| t.data()))
            .collect();
        let mut p: Vec<&mut [f64]> = values.iter_mut().map(|t| t.data_mut()).collect();
        self.update(&mut p, &g, lr)?;
        for (id, t) in ids.into_iter().zip(values) {
            store.set(id, t)?;
        }
        Ok(())
    }
}

/// Global L2 norm of all present gradients.
pub fn global_grad_norm(grads: &[Option<Tensor>]) -> f64 {
    grads
        .iter()
        .flatten()
        .flat_map(|t| t.data())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt()
}

/// Rescales gradients so their global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [Option<Tensor>], max_norm: f64) -> f64 {
    let norm = global_grad_norm(grads);
    if max_norm > 0.0 {
        let coef = max_norm / (norm + 1e-6);
        if coef < 1.0 {
            for t in grads.iter_mut().flatten() {
                t.data_mut().iter_mut().for_each(|g| *g *= coef);
            }
        }
    }
    norm
}

/// Reduce-on-plateau for a metric that should increase.
///
/// A value improves when it exceeds the best so far by the relative
/// threshold. After more than `patience` consecutive non-improving values
/// the rate is multiplied by `factor` and the count restarts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub threshold: f64,
    best: Option<f64>,
    bad_steps: usize,
    reductions: usize,
}

impl PlateauScheduler {
    pub const DEFAULT_THRESHOLD: f64 = 1e-4;

    pub fn new(lr: f64, factor: f64, patience: usize) -> Self {
        Self {
            lr,
            factor,
            patience,
            threshold: Self::DEFAULT_THRESHOLD,
            best: None,
            bad_steps: 0,
            reductions: 0,
        }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn reductions(&self) -> usize {
        self.reductions
    }

    /// Feeds one validation value and returns the rate for the next epoch.
    pub fn step(&mut self, value: f64) -> f64 {
        let improved = match self.best {
            None => !value.is_nan(),
            Some(b) => value > b * (1.0 + self.threshold.copysign(b)),
        };
        if improved {
            self.best = Some(value);
            self.bad_steps = 0;
        } else {
            self.bad_steps += 1;
        }
        if self.bad_steps > self.patience {
            self.lr *= self.factor;
            self.reductions += 1;
            self.bad_steps = 0;
        }
        self.lr
    }
}
