use super::conv::{Conv1dGeom, Conv2dGeom};
use super::ops::Unary;
use super::Tensor;
use crate::error::{Result, SeldError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A differentiable operation implemented outside the tape's built-in set.
///
/// `backward` receives the recorded input values, the recorded output and
/// the gradient of the loss with respect to that output, and returns one
/// gradient buffer per input (`None` is allowed where `needs_grad` is false).
pub trait CustomOp: Send + Sync {
    fn name(&self) -> &'static str;

    fn backward(
        &self,
        inputs: &[&Tensor],
        output: &Tensor,
        grad_output: &[f64],
        needs_grad: &[bool],
    ) -> Vec<Option<Vec<f64>>>;
}

pub(crate) enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias {
        x: Var,
        bias: Var,
    },
    Scale(Var, f64),
    Unary(Var, Unary),
    MatMul {
        a: Var,
        b: Var,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
        shared_rhs: bool,
    },
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    Permute(Var, Vec<usize>),
    Reverse(Var, usize),
    Concat(Vec<Var>, usize),
    Narrow {
        x: Var,
        axis: usize,
        start: usize,
    },
    Conv1d {
        x: Var,
        w: Var,
        geom: Conv1dGeom,
    },
    DepthwiseConv1d {
        x: Var,
        w: Var,
        geom: Conv1dGeom,
    },
    Conv2d {
        x: Var,
        w: Var,
        geom: Conv2dGeom,
    },
    AvgPool2d {
        x: Var,
        pool: (usize, usize),
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        training: bool,
    },
    Custom {
        inputs: Vec<Var>,
        op: Box<dyn CustomOp>,
    },
}

pub(crate) struct Node {
    pub value: Tensor,
    pub op: Op,
    pub requires_grad: bool,
}

/// Gradient accumulators indexed by node.
pub(crate) struct Grads<'a> {
    nodes: &'a [Node],
    bufs: &'a mut [Option<Vec<f64>>],
}

impl Grads<'_> {
    /// Zero-initialized accumulator for `v`, or `None` when `v` needs no gradient.
    pub fn slot(&mut self, v: Var) -> Option<&mut [f64]> {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        let n = node.value.numel();
        Some(self.bufs[v.0].get_or_insert_with(|| vec![0.0; n]))
    }

    pub fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn add(&mut self, v: Var, contribution: &[f64]) {
        if let Some(acc) = self.slot(v) {
            acc.iter_mut().zip(contribution).for_each(|(a, c)| *a += c);
        }
    }
}

/// Ordered record of executed operations.
///
/// Nodes are appended in execution order, so every node's inputs precede
/// it. Values are never mutated after recording.
#[derive(Default)]
pub struct Tape {
    pub(crate) nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub(crate) fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a custom operation whose forward value was computed by the caller.
    pub fn custom(&mut self, inputs: &[Var], output: Tensor, op: Box<dyn CustomOp>) -> Var {
        self.push(
            output,
            Op::Custom {
                inputs: inputs.to_vec(),
                op,
            },
            inputs,
        )
    }

    /// Gradient of the last `backward` loss with respect to a leaf.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let buf = self.grads.get(v.0)?.as_ref()?;
        Tensor::new(self.nodes[v.0].value.shape().to_vec(), buf.clone()).ok()
    }

    pub fn reset_grads(&mut self) {
        self.grads.clear();
        self.backward_done = false;
    }

    /// Reverse sweep from a scalar loss. Leaf gradients are retained and
    /// read back through [`Tape::grad`]; intermediate buffers are dropped.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(SeldError::BackwardTwice);
        }
        let loss_node = &self.nodes[loss.0];
        if loss_node.value.numel() != 1 {
            return Err(SeldError::NonScalarLoss(loss_node.value.shape().to_vec()));
        }
        self.backward_done = true;
        let mut bufs: Vec<Option<Vec<f64>>> = Vec::with_capacity(self.nodes.len());
        bufs.resize_with(self.nodes.len(), || None);
        if !loss_node.requires_grad {
            self.grads = bufs;
            return Ok(());
        }
        bufs[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = bufs[i].take() else { continue };
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                bufs[i] = Some(g);
                continue;
            }
            let mut grads = Grads {
                nodes: &self.nodes,
                bufs: &mut bufs,
            };
            backward_node(&self.nodes, node, &g, &mut grads);
        }
        self.grads = bufs;
        Ok(())
    }
}

fn backward_node(nodes: &[Node], node: &Node, g: &[f64], grads: &mut Grads<'_>) {
    let val = |v: Var| &nodes[v.0].value;
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            grads.add(*a, g);
            grads.add(*b, g);
        }
        Op::Sub(a, b) => {
            grads.add(*a, g);
            if let Some(gb) = grads.slot(*b) {
                gb.iter_mut().zip(g).for_each(|(a, c)| *a -= c);
            }
        }
        Op::Mul(a, b) => {
            let (av, bv) = (val(*a).data(), val(*b).data());
            if let Some(ga) = grads.slot(*a) {
                for ((acc, gi), bi) in ga.iter_mut().zip(g).zip(bv) {
                    *acc += gi * bi;
                }
            }
            if let Some(gb) = grads.slot(*b) {
                for ((acc, gi), ai) in gb.iter_mut().zip(g).zip(av) {
                    *acc += gi * ai;
                }
            }
        }
        Op::AddBias { x, bias } => {
            grads.add(*x, g);
            if let Some(gb) = grads.slot(*bias) {
                let n = gb.len();
                for chunk in g.chunks_exact(n) {
                    gb.iter_mut().zip(chunk).for_each(|(a, c)| *a += c);
                }
            }
        }
        Op::Scale(x, c) => {
            if let Some(gx) = grads.slot(*x) {
                gx.iter_mut().zip(g).for_each(|(a, gi)| *a += c * gi);
            }
        }
        Op::Unary(x, f) => {
            if let Some(gx) = grads.slot(*x) {
                f.backward(nodes[x.0].value.data(), node.value.data(), g, gx);
            }
        }
        Op::MatMul {
            a,
            b,
            batch,
            m,
            k,
            n,
            shared_rhs,
        } => super::ops::matmul_backward(
            val(*a).data(),
            val(*b).data(),
            g,
            (*a, *b),
            (*batch, *m, *k, *n),
            *shared_rhs,
            grads,
        ),
        Op::Sum(x) => {
            if let Some(gx) = grads.slot(*x) {
                gx.iter_mut().for_each(|a| *a += g[0]);
            }
        }
        Op::Mean(x) => {
            if let Some(gx) = grads.slot(*x) {
                let s = g[0] / gx.len() as f64;
                gx.iter_mut().for_each(|a| *a += s);
            }
        }
        Op::Reshape(x) => grads.add(*x, g),
        Op::Permute(x, perm) => {
            if grads.wants(*x) {
                let inv = super::ops::inverse_permutation(perm);
                let back = super::ops::permute_data(g, node.value.shape(), &inv);
                grads.add(*x, &back);
            }
        }
        Op::Reverse(x, axis) => {
            if grads.wants(*x) {
                let back = super::ops::reverse_data(g, node.value.shape(), *axis);
                grads.add(*x, &back);
            }
        }
        Op::Concat(parts, axis) => {
            let shape = node.value.shape();
            let (outer, _, inner) = super::split_axis(shape, *axis);
            let total = shape[*axis] * inner;
            let mut offset = 0;
            for p in parts {
                let len = val(*p).shape()[*axis] * inner;
                if let Some(gp) = grads.slot(*p) {
                    for o in 0..outer {
                        let src = &g[o * total + offset..o * total + offset + len];
                        gp[o * len..(o + 1) * len]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(a, c)| *a += c);
                    }
                }
                offset += len;
            }
        }
        Op::Narrow { x, axis, start } => {
            let in_shape = val(*x).shape();
            let (outer, full, inner) = super::split_axis(in_shape, *axis);
            let len = node.value.shape()[*axis];
            if let Some(gx) = grads.slot(*x) {
                for o in 0..outer {
                    let dst = o * full * inner + start * inner;
                    let src = &g[o * len * inner..(o + 1) * len * inner];
                    gx[dst..dst + len * inner]
                        .iter_mut()
                        .zip(src)
                        .for_each(|(a, c)| *a += c);
                }
            }
        }
        Op::Conv1d { x, w, geom } => {
            super::conv::conv1d_backward(val(*x).data(), val(*w).data(), g, (*x, *w), geom, grads)
        }
        Op::DepthwiseConv1d { x, w, geom } => super::conv::depthwise_backward(
            val(*x).data(),
            val(*w).data(),
            g,
            (*x, *w),
            geom,
            grads,
        ),
        Op::Conv2d { x, w, geom } => {
            super::conv::conv2d_backward(val(*x).data(), val(*w).data(), g, (*x, *w), geom, grads)
        }
        Op::AvgPool2d { x, pool } => {
            if let Some(gx) = grads.slot(*x) {
                super::conv::avg_pool2d_backward(nodes[x.0].value.shape(), *pool, g, gx);
            }
        }
        Op::BatchNorm {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
            training,
        } => super::norm::batch_norm_backward(
            val(*x).shape(),
            val(*gamma).data(),
            xhat,
            inv_std,
            *training,
            g,
            (*x, *gamma, *beta),
            grads,
        ),
        Op::Custom { inputs, op } => {
            let values: Vec<&Tensor> = inputs.iter().map(|v| val(*v)).collect();
            let needs: Vec<bool> = inputs.iter().map(|v| grads.wants(*v)).collect();
            let out = op.backward(&values, &node.value, g, &needs);
            assert_eq!(out.len(), inputs.len(), "{}: gradient count", op.name());
            for (v, gv) in inputs.iter().zip(out) {
                if let Some(gv) = gv {
                    assert_eq!(gv.len(), val(*v).numel(), "{}: gradient size", op.name());
                    grads.add(*v, &gv);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gives_ones() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::new([3], vec![1.0, -2.0, 4.0]).unwrap());
        let loss = tape.sum(x);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn sum_of_squares() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::new([2], vec![1.0, 2.0]).unwrap());
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum(sq);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn second_backward_errors_until_reset() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::ones([2]));
        let loss = tape.sum(x);
        tape.backward(loss).unwrap();
        assert!(matches!(tape.backward(loss), Err(SeldError::BackwardTwice)));
        tape.reset_grads();
        tape.backward(loss).unwrap();
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::ones([2]));
        assert!(matches!(tape.backward(x), Err(SeldError::NonScalarLoss(_))));
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::ones([2]));
        let c = tape.constant(Tensor::full([2], 3.0));
        let y = tape.mul(x, c).unwrap();
        let loss = tape.sum(y);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[3.0, 3.0]);
        assert!(tape.grad(c).is_none());
    }
}
