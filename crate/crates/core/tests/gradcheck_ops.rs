//! Finite-difference checks of every differentiable op class.

use rand::Rng;
use seld::gradcheck::{check_gradients, GradCheckReport};
use seld::nn::seeded_rng;
use seld::ssm::selective_scan;
use seld::tensor::{BatchNormMode, Padding, Tape, Tensor, Unary, Var};
use seld::Result;

const H: f64 = 1e-6;
const TOL: f64 = 1e-4;

fn rand_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = seeded_rng(seed);
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-1.0..1.0))
}

/// Tensor whose entries stay at least `gap` away from zero, for kinked ops.
fn away_from_zero(shape: &[usize], seed: u64, gap: f64) -> Tensor {
    let mut rng = seeded_rng(seed);
    Tensor::from_fn(shape.to_vec(), |_| {
        let m = rng.gen_range(gap..1.0);
        if rng.gen_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

/// Contracts `y` against a fixed random tensor so every output element
/// carries a distinct upstream gradient.
fn project(tape: &mut Tape, y: Var, seed: u64) -> Result<Var> {
    let w = rand_tensor(tape.shape(y), seed);
    let w = tape.constant(w);
    let p = tape.mul(y, w)?;
    Ok(tape.sum(p))
}

fn check<F>(inputs: &[Tensor], f: F) -> GradCheckReport
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let report = check_gradients(inputs, H, f).unwrap();
    assert!(report.passes(TOL), "{report:?}");
    report
}

#[test]
fn elementwise_binary() {
    let inputs = [rand_tensor(&[3, 4], 1), rand_tensor(&[3, 4], 2)];
    check(&inputs, |t, v| {
        let a = t.add(v[0], v[1])?;
        let s = t.sub(a, v[1])?;
        let m = t.mul(s, v[1])?;
        let m = t.scale(m, 1.7);
        project(t, m, 3)
    });
}

#[test]
fn bias_broadcast() {
    let inputs = [rand_tensor(&[2, 3, 4], 4), rand_tensor(&[4], 5)];
    check(&inputs, |t, v| {
        let y = t.add_bias(v[0], v[1])?;
        project(t, y, 6)
    });
}

#[test]
fn smooth_unaries() {
    for (k, f) in [Unary::Tanh, Unary::Sigmoid, Unary::Silu, Unary::Softplus, Unary::Exp, Unary::Neg]
        .into_iter()
        .enumerate()
    {
        let inputs = [rand_tensor(&[5, 3], 10 + k as u64).map(|x| 3.0 * x)];
        check(&inputs, |t, v| {
            let y = t.unary(v[0], f)?;
            project(t, y, 20)
        });
    }
}

#[test]
fn relu_and_log() {
    let inputs = [away_from_zero(&[6, 4], 30, 0.05)];
    check(&inputs, |t, v| {
        let y = t.relu(v[0]);
        project(t, y, 31)
    });
    let positive = [rand_tensor(&[6, 4], 32).map(|x| x.abs() + 0.2)];
    check(&positive, |t, v| {
        let y = t.log(v[0])?;
        project(t, y, 33)
    });
}

#[test]
fn matmul_batched_and_shared() {
    let inputs = [rand_tensor(&[2, 3, 4], 40), rand_tensor(&[4, 5], 41)];
    check(&inputs, |t, v| {
        let y = t.matmul(v[0], v[1])?;
        project(t, y, 42)
    });
    let batched = [rand_tensor(&[2, 3, 4], 43), rand_tensor(&[2, 4, 2], 44)];
    check(&batched, |t, v| {
        let y = t.matmul(v[0], v[1])?;
        project(t, y, 45)
    });
}

#[test]
fn reductions() {
    let inputs = [rand_tensor(&[3, 5], 50)];
    check(&inputs, |t, v| {
        let sq = t.mul(v[0], v[0])?;
        let m = t.mean(sq);
        let e = t.exp(v[0]);
        let s = t.sum(e);
        t.add(m, s)
    });
}

#[test]
fn layout_ops() {
    let inputs = [rand_tensor(&[2, 3, 4], 60), rand_tensor(&[2, 2, 4], 61)];
    check(&inputs, |t, v| {
        let c = t.concat(&[v[0], v[1]], 1)?; // [2,5,4]
        let r = t.reverse(c, 1)?;
        let p = t.permute(r, &[2, 0, 1])?; // [4,2,5]
        let n = t.narrow(p, 2, 1, 3)?; // [4,2,3]
        let s = t.reshape(n, &[8, 3])?;
        let s = t.tanh(s);
        project(t, s, 62)
    });
}

#[test]
fn conv1d_all_paddings() {
    for (k, padding) in [Padding::Same, Padding::Valid, Padding::Causal].into_iter().enumerate() {
        // channels-last along the time axis
        let inputs = [rand_tensor(&[2, 7, 3], 70 + k as u64), rand_tensor(&[4, 3, 3], 80 + k as u64)];
        check(&inputs, |t, v| {
            let y = t.conv1d(v[0], v[1], padding, 1)?;
            project(t, y, 90)
        });
        // channels-first, convolving the last axis
        let inputs = [rand_tensor(&[2, 3, 7], 71 + k as u64), rand_tensor(&[2, 3, 3], 81 + k as u64)];
        check(&inputs, |t, v| {
            let y = t.conv1d(v[0], v[1], padding, 2)?;
            project(t, y, 91)
        });
    }
}

#[test]
fn depthwise_conv1d() {
    for (k, padding) in [Padding::Same, Padding::Valid, Padding::Causal].into_iter().enumerate() {
        let inputs = [rand_tensor(&[2, 6, 3], 100 + k as u64), rand_tensor(&[3, 4], 110 + k as u64)];
        check(&inputs, |t, v| {
            let y = t.depthwise_conv1d(v[0], v[1], padding, 1)?;
            project(t, y, 120)
        });
    }
}

#[test]
fn conv2d_rect_kernels() {
    for (k, (kh, kw)) in [(3, 3), (1, 3), (3, 1)].into_iter().enumerate() {
        let inputs = [rand_tensor(&[2, 2, 5, 4], 130 + k as u64), rand_tensor(&[3, 2, kh, kw], 140 + k as u64)];
        check(&inputs, |t, v| {
            let y = t.conv2d(v[0], v[1])?;
            project(t, y, 150)
        });
    }
}

#[test]
fn avg_pool2d() {
    let inputs = [rand_tensor(&[2, 3, 6, 4], 160)];
    check(&inputs, |t, v| {
        let y = t.avg_pool2d(v[0], (3, 2))?;
        project(t, y, 161)
    });
}

#[test]
fn batch_norm_train_and_eval() {
    let inputs = [rand_tensor(&[3, 2, 4, 2], 170), rand_tensor(&[2], 171), rand_tensor(&[2], 172)];
    check(&inputs, |t, v| {
        let (y, _) = t.batch_norm(v[0], v[1], v[2], BatchNormMode::Train { eps: 1e-5 })?;
        project(t, y, 173)
    });
    let (mean, var) = ([0.1, -0.2], [0.5, 2.0]);
    check(&inputs, |t, v| {
        let mode = BatchNormMode::Eval {
            mean: &mean,
            var: &var,
            eps: 1e-5,
        };
        let (y, _) = t.batch_norm(v[0], v[1], v[2], mode)?;
        project(t, y, 174)
    });
}

#[test]
fn selective_scan_op() {
    let (l, d, n) = (5, 3, 4);
    let inputs = [
        rand_tensor(&[2, l, d], 180),
        rand_tensor(&[2, l, d], 181).map(|x| 0.05 + 0.2 * x.abs()),
        rand_tensor(&[d, n], 182).map(|x| -0.5 - x.abs()),
        rand_tensor(&[2, l, n], 183),
        rand_tensor(&[2, l, n], 184),
        rand_tensor(&[d], 185),
    ];
    check(&inputs, |t, v| {
        let y = selective_scan(t, v[0], v[1], v[2], v[3], v[4], v[5])?;
        project(t, y, 186)
    });
}

#[test]
fn two_layer_network() {
    let inputs = [
        rand_tensor(&[4, 3], 190),
        rand_tensor(&[3, 6], 191),
        rand_tensor(&[6], 192),
        rand_tensor(&[6, 2], 193),
    ];
    check(&inputs, |t, v| {
        let h = t.matmul(v[0], v[1])?;
        let h = t.add_bias(h, v[2])?;
        let h = t.tanh(h);
        let y = t.matmul(h, v[3])?;
        let y = t.sigmoid(y);
        let sq = t.mul(y, y)?;
        Ok(t.mean(sq))
    });
}
