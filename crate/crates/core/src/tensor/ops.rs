use super::kernels::{gemm, Mat};
use super::tape::{Grads, Op, Tape, Var};
use super::{split_axis, Tensor};
use crate::error::{shape_err, Result, SeldError};

/// Pointwise functions with a matching derivative.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Tanh,
    Relu,
    Sigmoid,
    Silu,
    Softplus,
    Exp,
    Log,
    Neg,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Unary {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Tanh => x.tanh(),
            Unary::Relu => x.max(0.0),
            Unary::Sigmoid => sigmoid(x),
            Unary::Silu => x * sigmoid(x),
            Unary::Softplus => softplus(x),
            Unary::Exp => x.exp(),
            Unary::Log => x.ln(),
            Unary::Neg => -x,
        }
    }

    /// Accumulates `g * f'(x)` into `acc`; `y` holds the forward outputs.
    pub(crate) fn backward(self, x: &[f64], y: &[f64], g: &[f64], acc: &mut [f64]) {
        let it = acc.iter_mut().zip(g).zip(x.iter().zip(y));
        match self {
            Unary::Tanh => it.for_each(|((a, g), (_, y))| *a += g * (1.0 - y * y)),
            Unary::Relu => it.for_each(|((a, g), (x, _))| {
                if *x > 0.0 {
                    *a += g
                }
            }),
            Unary::Sigmoid => it.for_each(|((a, g), (_, y))| *a += g * y * (1.0 - y)),
            Unary::Silu => it.for_each(|((a, g), (x, _))| {
                let s = sigmoid(*x);
                *a += g * s * (1.0 + x * (1.0 - s));
            }),
            Unary::Softplus => it.for_each(|((a, g), (x, _))| *a += g * sigmoid(*x)),
            Unary::Exp => it.for_each(|((a, g), (_, y))| *a += g * y),
            Unary::Log => it.for_each(|((a, g), (x, _))| *a += g / x),
            Unary::Neg => it.for_each(|((a, g), _)| *a -= g),
        }
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return shape_err(op, format!("{:?} vs {:?}", a.shape(), b.shape()));
    }
    Ok(())
}

impl Tape {
    fn binary(&mut self, a: Var, b: Var, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape(op, ta, tb)?;
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary(a, b, "add", |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    /// `x + bias` where `bias` matches the trailing dimensions of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let (xs, bs) = (tx.shape(), tb.shape());
        if bs.len() > xs.len() || xs[xs.len() - bs.len()..] != *bs {
            return shape_err("add_bias", format!("bias {bs:?} is not a suffix of {xs:?}"));
        }
        let n = tb.numel();
        let mut data = tx.data().to_vec();
        for chunk in data.chunks_exact_mut(n) {
            chunk.iter_mut().zip(tb.data()).for_each(|(v, b)| *v += b);
        }
        let out = Tensor::new(xs.to_vec(), data)?;
        Ok(self.push(out, Op::AddBias { x, bias }, &[x, bias]))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x).map(|v| v * c);
        self.push(out, Op::Scale(x, c), &[x])
    }

    pub fn unary(&mut self, x: Var, f: Unary) -> Result<Var> {
        if f == Unary::Log {
            if let Some(&bad) = self.value(x).data().iter().find(|v| **v <= 0.0) {
                return Err(SeldError::Domain { op: "log", value: bad });
            }
        }
        let out = self.value(x).map(|v| f.apply(v));
        Ok(self.push(out, Op::Unary(x, f), &[x]))
    }

    fn total(&mut self, x: Var, f: Unary) -> Var {
        // infallible for every variant but Log
        self.unary(x, f).expect("pointwise op")
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.total(x, Unary::Tanh)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.total(x, Unary::Relu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.total(x, Unary::Sigmoid)
    }

    pub fn silu(&mut self, x: Var) -> Var {
        self.total(x, Unary::Silu)
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.total(x, Unary::Softplus)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.total(x, Unary::Exp)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.total(x, Unary::Neg)
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Log)
    }

    /// Matrix product over the last two axes.
    ///
    /// `b` is either rank 2 (shared across every leading index of `a`) or has
    /// exactly the leading dimensions of `a`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (sa, sb) = (ta.shape(), tb.shape());
        if sa.len() < 2 || sb.len() < 2 {
            return shape_err("matmul", format!("operands must be rank >= 2: {sa:?} x {sb:?}"));
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (kb, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        if k != kb {
            return shape_err("matmul", format!("inner dims differ: {sa:?} x {sb:?}"));
        }
        let lead = &sa[..sa.len() - 2];
        let batch: usize = lead.iter().product();
        let shared_rhs = sb.len() == 2;
        if !shared_rhs && sb[..sb.len() - 2] != *lead {
            return shape_err("matmul", format!("batch dims differ: {sa:?} x {sb:?}"));
        }
        let mut out = vec![0.0; batch * m * n];
        if shared_rhs {
            gemm(
                Mat::row_major(ta.data(), batch * m, k),
                Mat::row_major(tb.data(), k, n),
                &mut out,
                0.0,
            );
        } else {
            for i in 0..batch {
                gemm(
                    Mat::row_major(&ta.data()[i * m * k..], m, k),
                    Mat::row_major(&tb.data()[i * k * n..], k, n),
                    &mut out[i * m * n..(i + 1) * m * n],
                    0.0,
                );
            }
        }
        let mut shape = lead.to_vec();
        shape.extend([m, n]);
        let out = Tensor::new(shape, out)?;
        let op = Op::MatMul {
            a,
            b,
            batch,
            m,
            k,
            n,
            shared_rhs,
        };
        Ok(self.push(out, op, &[a, b]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data().iter().sum::<f64>() / t.numel() as f64;
        self.push(Tensor::scalar(s), Op::Mean(x), &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).reshape(shape.to_vec())?;
        Ok(self.push(out, Op::Reshape(x), &[x]))
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let t = self.value(x);
        let rank = t.rank();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
            return shape_err("permute", format!("{perm:?} is not a permutation of rank {rank}"));
        }
        let data = permute_data(t.data(), t.shape(), perm);
        let shape: Vec<usize> = perm.iter().map(|&p| t.shape()[p]).collect();
        let out = Tensor::new(shape, data)?;
        Ok(self.push(out, Op::Permute(x, perm.to_vec()), &[x]))
    }

    /// Reverses element order along `axis`.
    pub fn reverse(&mut self, x: Var, axis: usize) -> Result<Var> {
        let t = self.value(x);
        if axis >= t.rank() {
            return shape_err("reverse", format!("axis {axis} out of range for {:?}", t.shape()));
        }
        let out = Tensor::new(t.shape().to_vec(), reverse_data(t.data(), t.shape(), axis))?;
        Ok(self.push(out, Op::Reverse(x, axis), &[x]))
    }

    /// Joins tensors along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return shape_err("concat", "no inputs");
        };
        let base = self.value(first).shape().to_vec();
        if axis >= base.len() {
            return shape_err("concat", format!("axis {axis} out of range for {base:?}"));
        }
        let mut total = 0;
        for p in parts {
            let s = self.value(*p).shape();
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return shape_err("concat", format!("{s:?} incompatible with {base:?} on axis {axis}"));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let t = self.value(*p);
                let len = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * len..(o + 1) * len]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let out = Tensor::new(shape, data)?;
        Ok(self.push(out, Op::Concat(parts.to_vec(), axis), parts))
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        if axis >= t.rank() || len == 0 || start + len > t.shape()[axis] {
            return shape_err(
                "narrow",
                format!("range {start}..{} on axis {axis} of {:?}", start + len, t.shape()),
            );
        }
        let (outer, full, inner) = split_axis(t.shape(), axis);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * full * inner + start * inner;
            data.extend_from_slice(&t.data()[base..base + len * inner]);
        }
        let mut shape = t.shape().to_vec();
        shape[axis] = len;
        let out = Tensor::new(shape, data)?;
        Ok(self.push(out, Op::Narrow { x, axis, start }, &[x]))
    }
}

pub(crate) fn matmul_backward(
    a: &[f64],
    b: &[f64],
    g: &[f64],
    (va, vb): (Var, Var),
    (batch, m, k, n): (usize, usize, usize, usize),
    shared_rhs: bool,
    grads: &mut Grads<'_>,
) {
    if shared_rhs {
        if let Some(ga) = grads.slot(va) {
            // dA = dC * B^T
            gemm(Mat::row_major(g, batch * m, n), Mat::transposed(b, k, n), ga, 1.0);
        }
        if let Some(gb) = grads.slot(vb) {
            // dB = A^T * dC
            gemm(Mat::transposed(a, batch * m, k), Mat::row_major(g, batch * m, n), gb, 1.0);
        }
        return;
    }
    if let Some(ga) = grads.slot(va) {
        for i in 0..batch {
            gemm(
                Mat::row_major(&g[i * m * n..], m, n),
                Mat::transposed(&b[i * k * n..], k, n),
                &mut ga[i * m * k..(i + 1) * m * k],
                1.0,
            );
        }
    }
    if let Some(gb) = grads.slot(vb) {
        for i in 0..batch {
            gemm(
                Mat::transposed(&a[i * m * k..], m, k),
                Mat::row_major(&g[i * m * n..], m, n),
                &mut gb[i * k * n..(i + 1) * k * n],
                1.0,
            );
        }
    }
}

pub(crate) fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Data of `x.permute(perm)` given the row-major data and shape of `x`.
pub(crate) fn permute_data(data: &[f64], shape: &[usize], perm: &[usize]) -> Vec<f64> {
    let in_strides = strides(shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let rank = shape.len();
    let mut out = Vec::with_capacity(data.len());
    if rank == 0 {
        return data.to_vec();
    }
    let mut idx = vec![0usize; rank];
    let mut src = 0usize;
    for _ in 0..data.len() {
        out.push(data[src]);
        // odometer increment over the output index
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            src += src_strides[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            src -= src_strides[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
    out
}

pub(crate) fn reverse_data(data: &[f64], shape: &[usize], axis: usize) -> Vec<f64> {
    let (outer, len, inner) = split_axis(shape, axis);
    let mut out = vec![0.0; data.len()];
    for o in 0..outer {
        for t in 0..len {
            let src = (o * len + t) * inner;
            let dst = (o * len + (len - 1 - t)) * inner;
            out[dst..dst + inner].copy_from_slice(&data[src..src + inner]);
        }
    }
    out
}
