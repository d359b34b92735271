use serde::{Deserialize, Serialize};

use crate::error::{Result, SeldError};

/// Optimizer, schedule and loop settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    /// L2 coefficient added to gradients before the Adam update.
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Learning-rate multiplier applied on a validation plateau.
    pub plateau_factor: f64,
    /// Non-improving validations tolerated before the rate is reduced.
    pub plateau_patience: usize,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub grad_clip: f64,
    /// Fraction of clips held out for validation when no split is given.
    pub val_fraction: f64,
    /// Adds a left/right-swapped copy of every training segment per epoch.
    pub acs: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 3e-5,
            weight_decay: 5e-6,
            batch_size: 32,
            epochs: 120,
            seed: 42,
            plateau_factor: 0.5,
            plateau_patience: 5,
            grad_clip: 5.0,
            val_fraction: 0.2,
            acs: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SeldError::Config(format!("train.{m}")));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return bad("plateau_factor must lie in (0, 1)");
        }
        if !(self.grad_clip >= 0.0) {
            return bad("grad_clip must be non-negative");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad("val_fraction must lie in [0, 1)");
        }
        Ok(())
    }
}
