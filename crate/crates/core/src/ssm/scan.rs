use std::ops::Range;

use super::zoh::zoh_input_gain;
use crate::error::{Result, SeldError};

/// Per-step discrete parameters of a single-channel diagonal SSM.
///
/// `a_bar`, `b_bar` and `c` are `len x state_dim`, row-major by step.
#[derive(Clone, Debug, PartialEq)]
pub struct SsmDiscrete {
    state_dim: usize,
    a_bar: Vec<f64>,
    b_bar: Vec<f64>,
    c: Vec<f64>,
    d: f64,
}

impl SsmDiscrete {
    pub fn new(state_dim: usize, a_bar: Vec<f64>, b_bar: Vec<f64>, c: Vec<f64>, d: f64) -> Result<Self> {
        if state_dim == 0
            || a_bar.len() % state_dim != 0
            || a_bar.len() != b_bar.len()
            || a_bar.len() != c.len()
        {
            return Err(SeldError::Shape {
                op: "SsmDiscrete",
                detail: format!(
                    "state_dim {state_dim} with a_bar {}, b_bar {}, c {}",
                    a_bar.len(),
                    b_bar.len(),
                    c.len()
                ),
            });
        }
        Ok(Self {
            state_dim,
            a_bar,
            b_bar,
            c,
            d,
        })
    }

    /// Discretizes a selective system: one continuous diagonal `a` (length N)
    /// with per-step input projections `b`, readouts `c` (both `L x N`) and
    /// step sizes `delta` (length L).
    pub fn from_selective(a: &[f64], b: &[f64], c: &[f64], delta: &[f64], d: f64) -> Result<Self> {
        let n = a.len();
        if n == 0 || b.len() != delta.len() * n || c.len() != b.len() {
            return Err(SeldError::Shape {
                op: "SsmDiscrete::from_selective",
                detail: format!("N={n}, L={}, b {}, c {}", delta.len(), b.len(), c.len()),
            });
        }
        let mut a_bar = Vec::with_capacity(b.len());
        let mut b_bar = Vec::with_capacity(b.len());
        for (k, &dt) in delta.iter().enumerate() {
            if !(dt > 0.0) {
                return Err(SeldError::InvalidArgument(format!("step {k} has delta {dt} <= 0")));
            }
            for (i, &ai) in a.iter().enumerate() {
                a_bar.push((dt * ai).exp());
                b_bar.push(zoh_input_gain(ai, dt) * b[k * n + i]);
            }
        }
        Self::new(n, a_bar, b_bar, c.to_vec(), d)
    }

    pub fn len(&self) -> usize {
        self.a_bar.len() / self.state_dim
    }

    pub fn is_empty(&self) -> bool {
        self.a_bar.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn a_bar(&self, k: usize) -> &[f64] {
        &self.a_bar[k * self.state_dim..(k + 1) * self.state_dim]
    }

    pub fn b_bar(&self, k: usize) -> &[f64] {
        &self.b_bar[k * self.state_dim..(k + 1) * self.state_dim]
    }

    pub fn c(&self, k: usize) -> &[f64] {
        &self.c[k * self.state_dim..(k + 1) * self.state_dim]
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    /// Parameters for the steps in `range`.
    pub fn slice(&self, range: Range<usize>) -> Self {
        let n = self.state_dim;
        let r = range.start * n..range.end * n;
        Self {
            state_dim: n,
            a_bar: self.a_bar[r.clone()].to_vec(),
            b_bar: self.b_bar[r.clone()].to_vec(),
            c: self.c[r].to_vec(),
            d: self.d,
        }
    }
}

/// Runs `h_k = a_bar_k * h_{k-1} + b_bar_k x_k`, `y_k = c_k . h_k + d x_k`
/// from `h_0 = 0`.
pub fn ssm_scan(x: &[f64], params: &SsmDiscrete) -> Result<Vec<f64>> {
    let mut h = vec![0.0; params.state_dim()];
    ssm_scan_with_state(x, params, &mut h)
}

/// Continues a scan from state `h`, leaving the final state in `h`.
pub fn ssm_scan_with_state(x: &[f64], params: &SsmDiscrete, h: &mut [f64]) -> Result<Vec<f64>> {
    if x.len() != params.len() {
        return Err(SeldError::Shape {
            op: "ssm_scan",
            detail: format!("{} inputs for {} parameter steps", x.len(), params.len()),
        });
    }
    if h.len() != params.state_dim() {
        return Err(SeldError::Shape {
            op: "ssm_scan",
            detail: format!("state has {} entries, expected {}", h.len(), params.state_dim()),
        });
    }
    let mut y = Vec::with_capacity(x.len());
    scan_prefix(x, params, h, &mut y);
    Ok(y)
}

/// Scans the first `x.len()` steps of `params` from state `h`, appending
/// outputs to `y`. Callers check that `params` has at least that many steps.
pub(super) fn scan_prefix(x: &[f64], params: &SsmDiscrete, h: &mut [f64], y: &mut Vec<f64>) {
    let n = params.state_dim();
    let steps = params
        .a_bar
        .chunks_exact(n)
        .zip(params.b_bar.chunks_exact(n))
        .zip(params.c.chunks_exact(n));
    for (&xk, ((ak, bk), ck)) in x.iter().zip(steps) {
        let mut yk = params.d * xk;
        for i in 0..n {
            h[i] = ak[i] * h[i] + bk[i] * xk;
            yk += ck[i] * h[i];
        }
        y.push(yk);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_params(len: usize, a: f64, b: f64, c: f64, d: f64) -> SsmDiscrete {
        SsmDiscrete::new(1, vec![a; len], vec![b; len], vec![c; len], d).unwrap()
    }

    #[test]
    fn memoryless_when_a_bar_is_zero() {
        let p = SsmDiscrete::new(2, vec![0.0; 6], vec![1.0, 2.0, 0.5, 0.5, 3.0, -1.0], vec![1.0; 6], 0.25).unwrap();
        let x = [1.0, -2.0, 4.0];
        let y = ssm_scan(&x, &p).unwrap();
        for k in 0..3 {
            let cb: f64 = p.c(k).iter().zip(p.b_bar(k)).map(|(c, b)| c * b).sum();
            assert_eq!(y[k], cb * x[k] + 0.25 * x[k]);
        }
    }

    #[test]
    fn impulse_response_halves() {
        let p = constant_params(3, 0.5, 1.0, 1.0, 0.0);
        assert_eq!(ssm_scan(&[1.0, 0.0, 0.0], &p).unwrap(), vec![1.0, 0.5, 0.25]);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let p = constant_params(3, 0.5, 1.0, 1.0, 0.0);
        assert!(ssm_scan(&[1.0, 0.0], &p).is_err());
    }

    #[test]
    fn bounded_over_long_inputs() {
        let len = 100_000;
        let a = [-0.5, -1.0, -4.0];
        let n = a.len();
        let b: Vec<f64> = (0..len * n).map(|i| ((i * 7919) % 13) as f64 / 6.5 - 1.0).collect();
        let c = vec![1.0; len * n];
        let delta: Vec<f64> = (0..len).map(|k| 0.01 + (k % 10) as f64 * 0.05).collect();
        let p = SsmDiscrete::from_selective(&a, &b, &c, &delta, 1.0).unwrap();
        let x: Vec<f64> = (0..len).map(|k| ((k * 31) % 17) as f64 / 8.5 - 1.0).collect();
        let y = ssm_scan(&x, &p).unwrap();
        assert!(y.iter().all(|v| v.is_finite() && v.abs() < 1e3));
    }
}
