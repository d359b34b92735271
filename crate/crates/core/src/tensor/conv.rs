use rayon::prelude::*;

use super::kernels::{gemm, Mat};
use super::tape::{Grads, Op, Tape, Var};
use super::Tensor;
use crate::error::{shape_err, Result};

/// Boundary handling for 1-D convolutions. Padded positions are zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Output length equals input length; `(k-1)/2` zeros on the left.
    Same,
    /// No padding; output length `L - k + 1`.
    Valid,
    /// `k-1` zeros on the left, so output `t` only sees inputs `<= t`.
    Causal,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Conv1dGeom {
    batch: usize,
    c_in: usize,
    c_out: usize,
    len_in: usize,
    len_out: usize,
    k: usize,
    pad_left: usize,
    /// Layout `[.., L, C]` when true, `[.., C, L]` otherwise.
    channels_last: bool,
}

impl Conv1dGeom {
    fn at(&self, b: usize, c: usize, t: usize, channels: usize, len: usize) -> usize {
        if self.channels_last {
            (b * len + t) * channels + c
        } else {
            (b * channels + c) * len + t
        }
    }

    fn x_at(&self, b: usize, c: usize, t: usize) -> usize {
        self.at(b, c, t, self.c_in, self.len_in)
    }

    fn y_at(&self, b: usize, c: usize, t: usize) -> usize {
        self.at(b, c, t, self.c_out, self.len_out)
    }

    /// Input position read by output `t` through tap `j`, if inside the signal.
    fn src(&self, t: usize, j: usize) -> Option<usize> {
        let p = (t + j).checked_sub(self.pad_left)?;
        (p < self.len_in).then_some(p)
    }
}

fn conv1d_geometry(
    op: &'static str,
    x_shape: &[usize],
    c_in: usize,
    c_out: usize,
    k: usize,
    padding: Padding,
    axis: usize,
) -> Result<(Conv1dGeom, Vec<usize>)> {
    let rank = x_shape.len();
    if rank < 2 || axis + 2 < rank || axis >= rank {
        return shape_err(op, format!("length axis {axis} must be one of the last two of {x_shape:?}"));
    }
    let channels_last = axis == rank - 2;
    let chan_axis = if channels_last { rank - 1 } else { rank - 2 };
    if x_shape[chan_axis] != c_in {
        return shape_err(op, format!("input has {} channels, kernel expects {c_in}", x_shape[chan_axis]));
    }
    let len_in = x_shape[axis];
    let (pad_left, len_out) = match padding {
        Padding::Same => ((k - 1) / 2, len_in),
        Padding::Causal => (k - 1, len_in),
        Padding::Valid => {
            if k > len_in {
                return shape_err(op, format!("kernel {k} longer than input {len_in}"));
            }
            (0, len_in - k + 1)
        }
    };
    let batch = x_shape[..rank - 2].iter().product();
    let mut out_shape = x_shape.to_vec();
    out_shape[chan_axis] = c_out;
    out_shape[axis] = len_out;
    let geom = Conv1dGeom {
        batch,
        c_in,
        c_out,
        len_in,
        len_out,
        k,
        pad_left,
        channels_last,
    };
    Ok((geom, out_shape))
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Conv2dGeom {
    batch: usize,
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
}

impl Conv2dGeom {
    fn col_rows(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    fn hw(&self) -> usize {
        self.h * self.w
    }

    fn im2col(&self, x: &[f64], col: &mut [f64]) {
        let (h, w, kh, kw) = (self.h, self.w, self.kh, self.kw);
        let (ph, pw) = (kh / 2, kw / 2);
        for c in 0..self.c_in {
            let plane = &x[c * h * w..(c + 1) * h * w];
            for i in 0..kh {
                for j in 0..kw {
                    let row = &mut col[((c * kh + i) * kw + j) * h * w..][..h * w];
                    for y in 0..h {
                        let sy = y + i;
                        let dst = &mut row[y * w..(y + 1) * w];
                        if sy < ph || sy - ph >= h {
                            dst.fill(0.0);
                            continue;
                        }
                        let src = &plane[(sy - ph) * w..(sy - ph + 1) * w];
                        for (x, d) in dst.iter_mut().enumerate() {
                            let sx = x + j;
                            *d = if sx < pw || sx - pw >= w { 0.0 } else { src[sx - pw] };
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, col: &[f64], gx: &mut [f64]) {
        let (h, w, kh, kw) = (self.h, self.w, self.kh, self.kw);
        let (ph, pw) = (kh / 2, kw / 2);
        for c in 0..self.c_in {
            let plane = &mut gx[c * h * w..(c + 1) * h * w];
            for i in 0..kh {
                for j in 0..kw {
                    let row = &col[((c * kh + i) * kw + j) * h * w..][..h * w];
                    for y in 0..h {
                        let sy = y + i;
                        if sy < ph || sy - ph >= h {
                            continue;
                        }
                        let dst = &mut plane[(sy - ph) * w..(sy - ph + 1) * w];
                        for x in 0..w {
                            let sx = x + j;
                            if sx >= pw && sx - pw < w {
                                dst[sx - pw] += row[y * w + x];
                            }
                        }
                    }
                }
            }
        }
    }
}

impl Tape {
    /// Dense 1-D cross-correlation along `axis` (one of the last two axes;
    /// the other is the channel axis, any leading axes are batch).
    /// `kernel` has shape `[C_out, C_in, k]`.
    pub fn conv1d(&mut self, x: Var, kernel: Var, padding: Padding, axis: usize) -> Result<Var> {
        let ks = self.value(kernel).shape().to_vec();
        if ks.len() != 3 {
            return shape_err("conv1d", format!("kernel must be [C_out, C_in, k], got {ks:?}"));
        }
        let (geom, out_shape) =
            conv1d_geometry("conv1d", self.value(x).shape(), ks[1], ks[0], ks[2], padding, axis)?;
        let (xd, wd) = (self.value(x).data(), self.value(kernel).data());
        let mut out = vec![0.0; out_shape.iter().product()];
        for b in 0..geom.batch {
            for o in 0..geom.c_out {
                for t in 0..geom.len_out {
                    let mut acc = 0.0;
                    for c in 0..geom.c_in {
                        let wrow = &wd[(o * geom.c_in + c) * geom.k..][..geom.k];
                        for (j, wv) in wrow.iter().enumerate() {
                            if let Some(p) = geom.src(t, j) {
                                acc += wv * xd[geom.x_at(b, c, p)];
                            }
                        }
                    }
                    out[geom.y_at(b, o, t)] = acc;
                }
            }
        }
        let out = Tensor::new(out_shape, out)?;
        Ok(self.push(out, Op::Conv1d { x, w: kernel, geom }, &[x, kernel]))
    }

    /// Per-channel 1-D cross-correlation; `kernel` has shape `[C, k]`.
    pub fn depthwise_conv1d(&mut self, x: Var, kernel: Var, padding: Padding, axis: usize) -> Result<Var> {
        let ks = self.value(kernel).shape().to_vec();
        if ks.len() != 2 {
            return shape_err("depthwise_conv1d", format!("kernel must be [C, k], got {ks:?}"));
        }
        let (geom, out_shape) = conv1d_geometry(
            "depthwise_conv1d",
            self.value(x).shape(),
            ks[0],
            ks[0],
            ks[1],
            padding,
            axis,
        )?;
        let (xd, wd) = (self.value(x).data(), self.value(kernel).data());
        let mut out = vec![0.0; out_shape.iter().product()];
        for b in 0..geom.batch {
            for c in 0..geom.c_in {
                let wrow = &wd[c * geom.k..(c + 1) * geom.k];
                for t in 0..geom.len_out {
                    let mut acc = 0.0;
                    for (j, wv) in wrow.iter().enumerate() {
                        if let Some(p) = geom.src(t, j) {
                            acc += wv * xd[geom.x_at(b, c, p)];
                        }
                    }
                    out[geom.y_at(b, c, t)] = acc;
                }
            }
        }
        let out = Tensor::new(out_shape, out)?;
        Ok(self.push(out, Op::DepthwiseConv1d { x, w: kernel, geom }, &[x, kernel]))
    }

    /// 2-D cross-correlation with zero "same" padding.
    ///
    /// `x` is `[B, C_in, H, W]`, `kernel` is `[C_out, C_in, kh, kw]` with odd
    /// `kh` and `kw`.
    pub fn conv2d(&mut self, x: Var, kernel: Var) -> Result<Var> {
        let (xs, ks) = (self.value(x).shape().to_vec(), self.value(kernel).shape().to_vec());
        if xs.len() != 4 || ks.len() != 4 || xs[1] != ks[1] {
            return shape_err("conv2d", format!("input {xs:?} and kernel {ks:?} are incompatible"));
        }
        if ks[2] % 2 == 0 || ks[3] % 2 == 0 {
            return shape_err("conv2d", format!("same padding needs odd kernel sizes, got {ks:?}"));
        }
        let geom = Conv2dGeom {
            batch: xs[0],
            c_in: xs[1],
            c_out: ks[0],
            h: xs[2],
            w: xs[3],
            kh: ks[2],
            kw: ks[3],
        };
        let (xd, wd) = (self.value(x).data(), self.value(kernel).data());
        let in_sz = geom.c_in * geom.hw();
        let out_sz = geom.c_out * geom.hw();
        let mut out = vec![0.0; geom.batch * out_sz];
        out.par_chunks_mut(out_sz).enumerate().for_each(|(b, ob)| {
            let xb = &xd[b * in_sz..(b + 1) * in_sz];
            let wm = Mat::row_major(wd, geom.c_out, geom.col_rows());
            if geom.kh == 1 && geom.kw == 1 {
                gemm(wm, Mat::row_major(xb, geom.c_in, geom.hw()), ob, 0.0);
            } else {
                let mut col = vec![0.0; geom.col_rows() * geom.hw()];
                geom.im2col(xb, &mut col);
                gemm(wm, Mat::row_major(&col, geom.col_rows(), geom.hw()), ob, 0.0);
            }
        });
        let out = Tensor::new(vec![geom.batch, geom.c_out, geom.h, geom.w], out)?;
        Ok(self.push(out, Op::Conv2d { x, w: kernel, geom }, &[x, kernel]))
    }

    /// Non-overlapping average pooling over the last two axes of `[B, C, H, W]`.
    pub fn avg_pool2d(&mut self, x: Var, pool: (usize, usize)) -> Result<Var> {
        let xs = self.value(x).shape().to_vec();
        let (ph, pw) = pool;
        if xs.len() != 4 || ph == 0 || pw == 0 || xs[2] % ph != 0 || xs[3] % pw != 0 {
            return shape_err("avg_pool2d", format!("pool {pool:?} does not tile {xs:?}"));
        }
        let (h, w) = (xs[2], xs[3]);
        let (oh, ow) = (h / ph, w / pw);
        let planes = xs[0] * xs[1];
        let xd = self.value(x).data();
        let norm = 1.0 / (ph * pw) as f64;
        let mut out = vec![0.0; planes * oh * ow];
        for p in 0..planes {
            let src = &xd[p * h * w..(p + 1) * h * w];
            let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
            for y in 0..h {
                for xi in 0..w {
                    dst[(y / ph) * ow + xi / pw] += src[y * w + xi];
                }
            }
            dst.iter_mut().for_each(|v| *v *= norm);
        }
        let out = Tensor::new(vec![xs[0], xs[1], oh, ow], out)?;
        Ok(self.push(out, Op::AvgPool2d { x, pool }, &[x]))
    }
}

pub(crate) fn conv1d_backward(
    xd: &[f64],
    wd: &[f64],
    g: &[f64],
    (x, w): (Var, Var),
    geom: &Conv1dGeom,
    grads: &mut Grads<'_>,
) {
    if let Some(gx) = grads.slot(x) {
        for b in 0..geom.batch {
            for o in 0..geom.c_out {
                for t in 0..geom.len_out {
                    let gy = g[geom.y_at(b, o, t)];
                    for c in 0..geom.c_in {
                        for j in 0..geom.k {
                            if let Some(p) = geom.src(t, j) {
                                gx[geom.x_at(b, c, p)] += wd[(o * geom.c_in + c) * geom.k + j] * gy;
                            }
                        }
                    }
                }
            }
        }
    }
    if let Some(gw) = grads.slot(w) {
        for b in 0..geom.batch {
            for o in 0..geom.c_out {
                for t in 0..geom.len_out {
                    let gy = g[geom.y_at(b, o, t)];
                    for c in 0..geom.c_in {
                        for j in 0..geom.k {
                            if let Some(p) = geom.src(t, j) {
                                gw[(o * geom.c_in + c) * geom.k + j] += xd[geom.x_at(b, c, p)] * gy;
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn depthwise_backward(
    xd: &[f64],
    wd: &[f64],
    g: &[f64],
    (x, w): (Var, Var),
    geom: &Conv1dGeom,
    grads: &mut Grads<'_>,
) {
    if let Some(gx) = grads.slot(x) {
        for b in 0..geom.batch {
            for c in 0..geom.c_in {
                for t in 0..geom.len_out {
                    let gy = g[geom.y_at(b, c, t)];
                    for j in 0..geom.k {
                        if let Some(p) = geom.src(t, j) {
                            gx[geom.x_at(b, c, p)] += wd[c * geom.k + j] * gy;
                        }
                    }
                }
            }
        }
    }
    if let Some(gw) = grads.slot(w) {
        for b in 0..geom.batch {
            for c in 0..geom.c_in {
                for t in 0..geom.len_out {
                    let gy = g[geom.y_at(b, c, t)];
                    for j in 0..geom.k {
                        if let Some(p) = geom.src(t, j) {
                            gw[c * geom.k + j] += xd[geom.x_at(b, c, p)] * gy;
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_backward(
    xd: &[f64],
    wd: &[f64],
    g: &[f64],
    (x, w): (Var, Var),
    geom: &Conv2dGeom,
    grads: &mut Grads<'_>,
) {
    let in_sz = geom.c_in * geom.hw();
    let out_sz = geom.c_out * geom.hw();
    let (rows, hw) = (geom.col_rows(), geom.hw());
    let pointwise = geom.kh == 1 && geom.kw == 1;

    if grads.wants(w) {
        // per-item partials, reduced in batch order for bit-stable sums
        let partials: Vec<Vec<f64>> = (0..geom.batch)
            .into_par_iter()
            .map(|b| {
                let xb = &xd[b * in_sz..(b + 1) * in_sz];
                let gb = &g[b * out_sz..(b + 1) * out_sz];
                let mut gw = vec![0.0; geom.c_out * rows];
                if pointwise {
                    gemm(Mat::row_major(gb, geom.c_out, hw), Mat::transposed(xb, rows, hw), &mut gw, 0.0);
                } else {
                    let mut col = vec![0.0; rows * hw];
                    geom.im2col(xb, &mut col);
                    gemm(Mat::row_major(gb, geom.c_out, hw), Mat::transposed(&col, rows, hw), &mut gw, 0.0);
                }
                gw
            })
            .collect();
        let gw = grads.slot(w).expect("wants(w)");
        for p in partials {
            gw.iter_mut().zip(&p).for_each(|(a, v)| *a += v);
        }
    }
    if let Some(gx) = grads.slot(x) {
        gx.par_chunks_mut(in_sz).enumerate().for_each(|(b, gxb)| {
            let gb = &g[b * out_sz..(b + 1) * out_sz];
            let wt = Mat::transposed(wd, geom.c_out, rows);
            if pointwise {
                gemm(wt, Mat::row_major(gb, geom.c_out, hw), gxb, 1.0);
            } else {
                let mut col = vec![0.0; rows * hw];
                gemm(wt, Mat::row_major(gb, geom.c_out, hw), &mut col, 0.0);
                geom.col2im(&col, gxb);
            }
        });
    }
}

pub(crate) fn avg_pool2d_backward(x_shape: &[usize], (ph, pw): (usize, usize), g: &[f64], gx: &mut [f64]) {
    let (h, w) = (x_shape[2], x_shape[3]);
    let (oh, ow) = (h / ph, w / pw);
    let norm = 1.0 / (ph * pw) as f64;
    for p in 0..x_shape[0] * x_shape[1] {
        let src = &g[p * oh * ow..(p + 1) * oh * ow];
        let dst = &mut gx[p * h * w..(p + 1) * h * w];
        for y in 0..h {
            for xi in 0..w {
                dst[y * w + xi] += src[(y / ph) * ow + xi / pw] * norm;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn delta_kernel_is_identity() {
        let mut tape = Tape::new();
        let x = tape.constant(tensor(&[1, 5], &[1.0, -2.0, 3.0, 0.5, 4.0]));
        let k = tape.constant(tensor(&[1, 1, 3], &[0.0, 1.0, 0.0]));
        let y = tape.conv1d(x, k, Padding::Same, 1).unwrap();
        assert_eq!(tape.value(y), tape.value(x));
    }

    #[test]
    fn box_kernel_keeps_constant_interior() {
        let mut tape = Tape::new();
        let c = 2.5;
        let x = tape.constant(Tensor::full([1, 8], c));
        let k = tape.constant(Tensor::full([1, 1, 3], 1.0 / 3.0));
        let y = tape.conv1d(x, k, Padding::Same, 1).unwrap();
        let out = tape.value(y).data();
        for v in &out[1..7] {
            assert!((v - c).abs() < 1e-15);
        }
        // zero padding at both ends
        assert!((out[0] - 2.0 * c / 3.0).abs() < 1e-15);
        assert!((out[7] - 2.0 * c / 3.0).abs() < 1e-15);
    }

    #[test]
    fn causal_depthwise_only_sees_past() {
        let mut tape = Tape::new();
        // [L=4, C=1], channels last
        let x = tape.constant(tensor(&[4, 1], &[1.0, 0.0, 0.0, 0.0]));
        let k = tape.constant(tensor(&[1, 2], &[0.5, 1.0]));
        let y = tape.depthwise_conv1d(x, k, Padding::Causal, 0).unwrap();
        // y_t = 0.5 x_{t-1} + x_t
        assert_eq!(tape.value(y).data(), &[1.0, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn valid_padding_shrinks_and_rejects_long_kernels() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::ones([2, 5]));
        let k = tape.constant(Tensor::ones([3, 2, 4]));
        let y = tape.conv1d(x, k, Padding::Valid, 1).unwrap();
        assert_eq!(tape.shape(y), &[3, 2]);
        let k6 = tape.constant(Tensor::ones([3, 2, 6]));
        assert!(tape.conv1d(x, k6, Padding::Valid, 1).is_err());
    }

    #[test]
    fn conv2d_matches_direct_loop() {
        let x = Tensor::from_fn([2, 3, 4, 5], |i| ((i * 37) % 11) as f64 - 5.0);
        let w = Tensor::from_fn([2, 3, 3, 1], |i| ((i * 13) % 7) as f64 - 3.0);
        let mut tape = Tape::new();
        let (xv, wv) = (tape.constant(x.clone()), tape.constant(w.clone()));
        let y = tape.conv2d(xv, wv).unwrap();
        let out = tape.value(y);
        for b in 0..2 {
            for o in 0..2 {
                for i in 0..4 {
                    for j in 0..5 {
                        let mut acc = 0.0;
                        for c in 0..3 {
                            for di in 0..3 {
                                let si = i as isize + di as isize - 1;
                                if (0..4).contains(&si) {
                                    acc += w.at(&[o, c, di, 0]) * x.at(&[b, c, si as usize, j]);
                                }
                            }
                        }
                        assert_eq!(out.at(&[b, o, i, j]), acc);
                    }
                }
            }
        }
    }

    #[test]
    fn avg_pool_requires_tiling() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_fn([1, 1, 4, 2], |i| i as f64));
        let y = tape.avg_pool2d(x, (2, 2)).unwrap();
        assert_eq!(tape.value(y).data(), &[1.5, 5.5]);
        assert!(tape.avg_pool2d(x, (3, 1)).is_err());
    }
}
