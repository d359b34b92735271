//! Zero-order-hold discretization of a diagonal state-space system.
//!
//! For a diagonal continuous system `h' = a h + b x` held constant over a
//! step of length `delta`:
//!
//! ```text
//! a_bar = exp(delta * a)
//! b_bar = (delta * a)^-1 (exp(delta * a) - 1) * delta * b = phi(a, delta) * b
//! ```
//!
//! with `phi(a, delta) = expm1(delta * a) / a`, which tends to `delta` as
//! `a -> 0`.

use crate::error::{Result, SeldError};

/// Below this `|delta * a|` the closed form is replaced by its Taylor series.
pub const SERIES_THRESHOLD: f64 = 1e-6;

/// `phi(a, delta) = (exp(delta a) - 1) / a`.
pub fn zoh_input_gain(a: f64, delta: f64) -> f64 {
    let x = delta * a;
    if x.abs() < SERIES_THRESHOLD {
        delta * (1.0 + x / 2.0 + x * x / 6.0)
    } else {
        x.exp_m1() / a
    }
}

/// `d phi / d a`. The closed form `(x e^x - expm1(x)) / a^2` loses digits
/// to cancellation for small `x = delta a`, so a longer series covers
/// `|x| < 1e-2`.
pub(crate) fn zoh_input_gain_da(a: f64, delta: f64) -> f64 {
    let x = delta * a;
    if x.abs() < 1e-2 {
        // delta^2 * sum_{m>=1} m x^(m-1) / (m+1)!
        let mut sum = 0.0;
        let mut pow = 1.0;
        let mut fact = 2.0; // (m+1)! starting at m = 1
        for m in 1..=7 {
            sum += m as f64 * pow / fact;
            pow *= x;
            fact *= (m + 2) as f64;
        }
        delta * delta * sum
    } else {
        (x * x.exp() - x.exp_m1()) / (a * a)
    }
}

/// Discretizes a diagonal system (`a` holds the diagonal) for one step.
pub fn zoh_discretize(a: &[f64], b: &[f64], delta: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.len() != b.len() {
        return Err(SeldError::Shape {
            op: "zoh_discretize",
            detail: format!("a has {} entries, b has {}", a.len(), b.len()),
        });
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(SeldError::InvalidArgument(format!(
            "step size must be positive and finite, got {delta}"
        )));
    }
    let a_bar = a.iter().map(|&ai| (delta * ai).exp()).collect();
    let b_bar = a
        .iter()
        .zip(b)
        .map(|(&ai, &bi)| zoh_input_gain(ai, delta) * bi)
        .collect();
    Ok((a_bar, b_bar))
}
