//! Permutation-invariant multi-track loss.
//!
//! For every (batch, frame, class) cell the prediction tracks are matched
//! to the target tracks by the permutation with the lowest mean squared
//! error over all tracks and the three slot values; the loss is the mean of
//! those minima over cells.

use super::accdoa::SLOT_DIM;
use crate::error::{shape_err, Result};
use crate::tensor::{CustomOp, Tape, Tensor, Var};

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut p: Vec<usize> = (0..n).collect();
    loop {
        out.push(p.clone());
        // next lexicographic permutation
        let Some(i) = (1..n).rev().find(|&i| p[i - 1] < p[i]) else {
            return out;
        };
        let j = (i..n).rev().find(|&j| p[j] > p[i - 1]).unwrap();
        p.swap(i - 1, j);
        p[i..].reverse();
    }
}

#[derive(Clone, Copy)]
struct Geometry {
    cells_outer: usize,
    tracks: usize,
    classes: usize,
}

/// Squared error of one cell under permutation `perm`, where prediction
/// track `perm[j]` is matched to target track `j`.
fn cell_error(pred: &[f64], target: &[f64], g: Geometry, base: usize, class: usize, perm: &[usize]) -> f64 {
    let mut err = 0.0;
    for (j, &pj) in perm.iter().enumerate() {
        let po = ((base + pj) * g.classes + class) * SLOT_DIM;
        let to = ((base + j) * g.classes + class) * SLOT_DIM;
        for k in 0..SLOT_DIM {
            let e = pred[po + k] - target[to + k];
            err += e * e;
        }
    }
    err
}

/// Minimizing permutation index per cell, lowest index on ties.
fn best_permutations(pred: &[f64], target: &[f64], g: Geometry, perms: &[Vec<usize>]) -> (Vec<usize>, f64) {
    let mut choice = Vec::with_capacity(g.cells_outer * g.classes);
    let mut total = 0.0;
    for outer in 0..g.cells_outer {
        let base = outer * g.tracks;
        for class in 0..g.classes {
            let mut best = (0, f64::INFINITY);
            for (i, perm) in perms.iter().enumerate() {
                let e = cell_error(pred, target, g, base, class, perm);
                if e < best.1 {
                    best = (i, e);
                }
            }
            choice.push(best.0);
            total += best.1;
        }
    }
    (choice, total)
}

struct PitLossOp {
    geometry: Geometry,
    perms: Vec<Vec<usize>>,
    choice: Vec<usize>,
    norm: f64,
}

impl CustomOp for PitLossOp {
    fn name(&self) -> &'static str {
        "pit_loss"
    }

    fn backward(&self, inputs: &[&Tensor], _out: &Tensor, g: &[f64], needs: &[bool]) -> Vec<Option<Vec<f64>>> {
        let (pred, target) = (inputs[0].data(), inputs[1].data());
        let geo = self.geometry;
        let scale = 2.0 * g[0] / self.norm;
        let mut gp = vec![0.0; pred.len()];
        let mut gt = vec![0.0; target.len()];
        for outer in 0..geo.cells_outer {
            let base = outer * geo.tracks;
            for class in 0..geo.classes {
                let perm = &self.perms[self.choice[outer * geo.classes + class]];
                for (j, &pj) in perm.iter().enumerate() {
                    let po = ((base + pj) * geo.classes + class) * SLOT_DIM;
                    let to = ((base + j) * geo.classes + class) * SLOT_DIM;
                    for k in 0..SLOT_DIM {
                        let e = scale * (pred[po + k] - target[to + k]);
                        gp[po + k] += e;
                        gt[to + k] -= e;
                    }
                }
            }
        }
        vec![needs[0].then_some(gp), needs[1].then_some(gt)]
    }
}

fn check_shapes(pred: &[usize], target: &[usize]) -> Result<Geometry> {
    if pred != target || pred.len() < 3 || pred[pred.len() - 1] != SLOT_DIM {
        return shape_err(
            "permutation_invariant_loss",
            format!("prediction {pred:?} and target {target:?} must agree and end in [tracks, classes, {SLOT_DIM}]"),
        );
    }
    let r = pred.len();
    Ok(Geometry {
        cells_outer: pred[..r - 3].iter().product(),
        tracks: pred[r - 3],
        classes: pred[r - 2],
    })
}

/// Records the loss on the tape. `pred` and `target` are
/// `[.., tracks, classes, 3]` with identical shapes.
pub fn permutation_invariant_loss(tape: &mut Tape, pred: Var, target: Var) -> Result<Var> {
    let geometry = check_shapes(tape.shape(pred), tape.shape(target))?;
    let perms = permutations(geometry.tracks);
    let (choice, total) = best_permutations(tape.value(pred).data(), tape.value(target).data(), geometry, &perms);
    let norm = (geometry.cells_outer * geometry.classes * geometry.tracks * SLOT_DIM) as f64;
    let out = Tensor::scalar(total / norm);
    Ok(tape.custom(
        &[pred, target],
        out,
        Box::new(PitLossOp {
            geometry,
            perms,
            choice,
            norm,
        }),
    ))
}

/// Loss value without a tape.
pub fn pit_loss_value(pred: &Tensor, target: &Tensor) -> Result<f64> {
    let geometry = check_shapes(pred.shape(), target.shape())?;
    let perms = permutations(geometry.tracks);
    let (_, total) = best_permutations(pred.data(), target.data(), geometry, &perms);
    Ok(total / (geometry.cells_outer * geometry.classes * geometry.tracks * SLOT_DIM) as f64)
}
