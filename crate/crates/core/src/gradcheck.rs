//! Central finite-difference gradient checking.
//!
//! The numerical side only ever evaluates forward passes on fresh tapes, so
//! it is independent of every backward rule it checks.

use crate::error::Result;
use crate::tensor::{Tape, Tensor, Var};

/// Gradients below this magnitude are compared in absolute rather than
/// relative terms; roundoff in the difference quotient is about
/// `1e-16 * |f| / h` and would otherwise dominate near-zero entries.
pub const REL_ERR_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// `(input index, flat element index)` of the worst entry.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.checked > 0 && self.max_rel_err < tol
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Checks every element of every input.
pub fn check_gradients<F>(inputs: &[Tensor], h: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    check_gradients_sampled(inputs, h, usize::MAX, f)
}

/// Like [`check_gradients`] but probes at most `max_per_input` evenly
/// strided elements of each input.
pub fn check_gradients_sampled<F>(inputs: &[Tensor], h: f64, max_per_input: usize, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| tape.grad(*v).unwrap_or_else(|| Tensor::zeros(t.shape().to_vec())))
        .collect();

    let eval = |probe: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = probe.iter().map(|t| tape.constant(t.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        tape.value(loss).item()
    };

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        checked: 0,
    };
    let mut probe: Vec<Tensor> = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let n = input.numel();
        let stride = n.div_ceil(max_per_input.min(n)).max(1);
        for e in (0..n).step_by(stride) {
            let orig = input.data()[e];
            probe[i] = with_value(input, e, orig + h);
            let plus = eval(&probe)?;
            probe[i] = with_value(input, e, orig - h);
            let minus = eval(&probe)?;
            probe[i] = input.clone();
            let numeric = (plus - minus) / (2.0 * h);
            let err = relative_error(analytic[i].data()[e], numeric);
            report.checked += 1;
            if err > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = report.max_rel_err.max(err);
                if err >= report.max_rel_err {
                    report.worst = Some((i, e));
                }
            }
        }
    }
    Ok(report)
}

fn with_value(t: &Tensor, index: usize, v: f64) -> Tensor {
    let mut data = t.data().to_vec();
    data[index] = v;
    Tensor::new(t.shape().to_vec(), data).expect("same shape")
}
