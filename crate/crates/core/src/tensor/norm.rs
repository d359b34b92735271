use super::tape::{Grads, Op, Tape, Var};
use super::Tensor;
use crate::error::{shape_err, Result};

/// How batch normalization obtains its per-channel statistics.
#[derive(Clone, Copy, Debug)]
pub enum BatchNormMode<'a> {
    /// Normalize with the statistics of the current batch.
    Train { eps: f64 },
    /// Normalize with stored running statistics.
    Eval { mean: &'a [f64], var: &'a [f64], eps: f64 },
}

/// Per-channel statistics measured on a training batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Bessel-corrected variance, the value folded into running statistics.
    pub var_unbiased: Vec<f64>,
}

impl Tape {
    /// Batch normalization over every axis except axis 1 (channels).
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: BatchNormMode<'_>,
    ) -> Result<(Var, Option<BatchStats>)> {
        let xs = self.value(x).shape().to_vec();
        if xs.len() < 2 {
            return shape_err("batch_norm", format!("input needs a channel axis: {xs:?}"));
        }
        let c = xs[1];
        if self.value(gamma).shape() != [c] || self.value(beta).shape() != [c] {
            return shape_err("batch_norm", format!("affine params must be [{c}]"));
        }
        let inner: usize = xs[2..].iter().product();
        let batch = xs[0];
        let count = (batch * inner) as f64;
        let xd = self.value(x).data();
        let channel_iter = |ch: usize| {
            (0..batch).flat_map(move |b| {
                let base = (b * c + ch) * inner;
                base..base + inner
            })
        };

        let (mean, var, eps, stats) = match mode {
            BatchNormMode::Train { eps } => {
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for ch in 0..c {
                    let m = channel_iter(ch).map(|i| xd[i]).sum::<f64>() / count;
                    let v = channel_iter(ch).map(|i| (xd[i] - m).powi(2)).sum::<f64>() / count;
                    mean[ch] = m;
                    var[ch] = v;
                }
                let unbiased = var
                    .iter()
                    .map(|v| if count > 1.0 { v * count / (count - 1.0) } else { *v })
                    .collect();
                let stats = BatchStats {
                    mean: mean.clone(),
                    var_unbiased: unbiased,
                };
                (mean, var, eps, Some(stats))
            }
            BatchNormMode::Eval { mean, var, eps } => {
                if mean.len() != c || var.len() != c {
                    return shape_err("batch_norm", format!("running stats must have {c} entries"));
                }
                (mean.to_vec(), var.to_vec(), eps, None)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let (gd, bd) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![0.0; xd.len()];
        let mut out = vec![0.0; xd.len()];
        for ch in 0..c {
            for i in channel_iter(ch) {
                let h = (xd[i] - mean[ch]) * inv_std[ch];
                xhat[i] = h;
                out[i] = gd[ch] * h + bd[ch];
            }
        }
        let out = Tensor::new(xs, out)?;
        let op = Op::BatchNorm {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
            training: stats.is_some(),
        };
        Ok((self.push(out, op, &[x, gamma, beta]), stats))
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn batch_norm_backward(
    x_shape: &[usize],
    gamma: &[f64],
    xhat: &[f64],
    inv_std: &[f64],
    training: bool,
    g: &[f64],
    (x, gv, bv): (Var, Var, Var),
    grads: &mut Grads<'_>,
) {
    let c = x_shape[1];
    let batch = x_shape[0];
    let inner: usize = x_shape[2..].iter().product();
    let count = (batch * inner) as f64;
    let idx = |ch: usize| {
        (0..batch).flat_map(move |b| {
            let base = (b * c + ch) * inner;
            base..base + inner
        })
    };
    let mut sum_g = vec![0.0; c];
    let mut sum_gx = vec![0.0; c];
    for ch in 0..c {
        for i in idx(ch) {
            sum_g[ch] += g[i];
            sum_gx[ch] += g[i] * xhat[i];
        }
    }
    if let Some(gg) = grads.slot(gv) {
        gg.iter_mut().zip(&sum_gx).for_each(|(a, s)| *a += s);
    }
    if let Some(gb) = grads.slot(bv) {
        gb.iter_mut().zip(&sum_g).for_each(|(a, s)| *a += s);
    }
    if let Some(gx) = grads.slot(x) {
        for ch in 0..c {
            let scale = gamma[ch] * inv_std[ch];
            for i in idx(ch) {
                gx[i] += if training {
                    scale * (g[i] - sum_g[ch] / count - xhat[i] * sum_gx[ch] / count)
                } else {
                    scale * g[i]
                };
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn train_mode_normalizes_each_channel() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_fn([2, 2, 3], |i| (i * i) as f64));
        let g = tape.constant(Tensor::ones([2]));
        let b = tape.constant(Tensor::zeros([2]));
        let (y, stats) = tape.batch_norm(x, g, b, BatchNormMode::Train { eps: 0.0 }).unwrap();
        let out = tape.value(y);
        for ch in 0..2 {
            let vals: Vec<f64> = (0..2)
                .flat_map(|bi| (0..3).map(move |t| (bi, t)))
                .map(|(bi, t)| out.at(&[bi, ch, t]))
                .collect();
            let m = vals.iter().sum::<f64>() / 6.0;
            let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 6.0;
            assert!(m.abs() < 1e-12);
            assert!((v - 1.0).abs() < 1e-12);
        }
        assert!(stats.is_some());
    }

    #[test]
    fn eval_mode_uses_running_stats() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::full([1, 1, 2], 3.0));
        let g = tape.constant(Tensor::full([1], 2.0));
        let b = tape.constant(Tensor::full([1], 0.5));
        let mode = BatchNormMode::Eval {
            mean: &[1.0],
            var: &[4.0],
            eps: 0.0,
        };
        let (y, stats) = tape.batch_norm(x, g, b, mode).unwrap();
        assert!(stats.is_none());
        assert_eq!(tape.value(y).data(), &[2.5, 2.5]);
    }
}
