//! Forward and backward kernels on [`Tensor`]. The tape in
//! [`super::tape`] composes these; they are also usable directly.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::real::Real;

/// Default LayerNorm epsilon.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// `a · b`.
pub fn matmul<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.cols() != b.rows() {
        return Err(Error::dim(
            "matmul",
            format!("lhs {:?} incompatible with rhs {:?}", a.shape(), b.shape()),
        ));
    }
    let (n, k, m) = (a.rows(), a.cols(), b.cols());
    let mut out = Tensor::zeros(n, m);
    let bd = b.data();
    for i in 0..n {
        let arow = a.row(i);
        let orow = out.row_mut(i);
        for (p, &av) in arow.iter().enumerate().take(k) {
            if av == T::zero() {
                continue;
            }
            let brow = &bd[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(out)
}

/// `aᵀ · b`.
pub fn matmul_tn<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.rows() != b.rows() {
        return Err(Error::dim(
            "matmul_tn",
            format!("lhs {:?} incompatible with rhs {:?}", a.shape(), b.shape()),
        ));
    }
    let mut out = Tensor::zeros(a.cols(), b.cols());
    for r in 0..a.rows() {
        let arow = a.row(r);
        let brow = b.row(r);
        for (p, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let orow = out.row_mut(p);
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(out)
}

/// `a · bᵀ`.
pub fn matmul_nt<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.cols() != b.cols() {
        return Err(Error::dim(
            "matmul_nt",
            format!("lhs {:?} incompatible with rhs {:?}", a.shape(), b.shape()),
        ));
    }
    let mut out = Tensor::zeros(a.rows(), b.rows());
    for i in 0..a.rows() {
        let arow = a.row(i);
        for j in 0..b.rows() {
            let s = arow
                .iter()
                .zip(b.row(j))
                .fold(T::zero(), |acc, (&x, &y)| acc + x * y);
            out.set(i, j, s);
        }
    }
    Ok(out)
}

/// `y = x·W (+ b)` with `x: N×Din`, `W: Din×Dout`, `b: 1×Dout`.
pub fn linear<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    if x.cols() != w.rows() {
        return Err(Error::dim(
            "linear",
            format!(
                "x has {} columns but W has {} rows",
                x.cols(),
                w.rows()
            ),
        ));
    }
    let mut y = matmul(x, w)?;
    if let Some(b) = b {
        add_row_inplace(&mut y, b, "linear")?;
    }
    Ok(y)
}

/// Gradients of [`linear`]: `(∂L/∂x, ∂L/∂W, ∂L/∂b)`.
pub fn linear_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    grad_y: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let gx = matmul_nt(grad_y, w)?;
    let gw = matmul_tn(x, grad_y)?;
    Ok((gx, gw, column_sums(grad_y)))
}

pub(crate) fn add_row_inplace<T: Real>(y: &mut Tensor<T>, b: &Tensor<T>, op: &'static str) -> Result<()> {
    if b.rows() != 1 || b.cols() != y.cols() {
        return Err(Error::dim(
            op,
            format!("bias {:?} does not broadcast over {:?}", b.shape(), y.shape()),
        ));
    }
    let bias = b.row(0);
    for r in 0..y.rows() {
        for (v, &bv) in y.row_mut(r).iter_mut().zip(bias) {
            *v += bv;
        }
    }
    Ok(())
}

pub fn column_sums<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let mut out = Tensor::zeros(1, x.cols());
    for r in 0..x.rows() {
        for (o, &v) in out.row_mut(0).iter_mut().zip(x.row(r)) {
            *o += v;
        }
    }
    out
}

fn std_normal_cdf<T: Real>(x: T) -> T {
    T::of(0.5) * (T::one() + (x * T::of(FRAC_1_SQRT_2)).erf())
}

fn std_normal_pdf<T: Real>(x: T) -> T {
    (-(x * x) * T::of(0.5)).exp() * T::of(1.0 / (2.0 * PI).sqrt())
}

/// Exact GELU, `x·Φ(x)`.
pub fn gelu_scalar<T: Real>(x: T) -> T {
    x * std_normal_cdf(x)
}

pub fn gelu_grad_scalar<T: Real>(x: T) -> T {
    std_normal_cdf(x) + x * std_normal_pdf(x)
}

pub fn gelu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(gelu_scalar)
}

pub fn gelu_backward<T: Real>(x: &Tensor<T>, grad_y: &Tensor<T>) -> Result<Tensor<T>> {
    x.zip_map(grad_y, "gelu_backward", |v, g| g * gelu_grad_scalar(v))
}

/// Per-row statistics kept by [`layer_norm`] for the backward pass.
#[derive(Clone, Debug)]
pub struct LayerNormCache<T> {
    pub normalized: Tensor<T>,
    pub inv_std: Vec<T>,
}

/// Row-wise LayerNorm over the feature axis with affine `gamma`, `beta` (`1×D`).
pub fn layer_norm<T: Real>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: T,
) -> Result<(Tensor<T>, LayerNormCache<T>)> {
    let d = x.cols();
    if gamma.shape() != (1, d) || beta.shape() != (1, d) {
        return Err(Error::dim(
            "layer_norm",
            format!(
                "gamma {:?} / beta {:?} for input width {d}",
                gamma.shape(),
                beta.shape()
            ),
        ));
    }
    let dn = T::of(d as f64);
    let mut normalized = Tensor::zeros(x.rows(), d);
    let mut out = Tensor::zeros(x.rows(), d);
    let mut inv_std = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let row = x.row(r);
        let mean = row.iter().copied().sum::<T>() / dn;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
        let rstd = T::one() / (var + eps).sqrt();
        inv_std.push(rstd);
        let nrow = normalized.row_mut(r);
        for (n, &v) in nrow.iter_mut().zip(row) {
            *n = (v - mean) * rstd;
        }
        let nrow = normalized.row(r).to_vec();
        for (c, o) in out.row_mut(r).iter_mut().enumerate() {
            *o = nrow[c] * gamma.get(0, c) + beta.get(0, c);
        }
    }
    Ok((out, LayerNormCache { normalized, inv_std }))
}

/// Gradients of [`layer_norm`]: `(∂L/∂x, ∂L/∂γ, ∂L/∂β)`.
pub fn layer_norm_backward<T: Real>(
    cache: &LayerNormCache<T>,
    gamma: &Tensor<T>,
    grad_y: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (rows, d) = grad_y.shape();
    let dn = T::of(d as f64);
    let mut gx = Tensor::zeros(rows, d);
    let mut ggamma = Tensor::zeros(1, d);
    let mut gbeta = Tensor::zeros(1, d);
    let mut dxhat = vec![T::zero(); d];
    for r in 0..rows {
        let gy = grad_y.row(r);
        let xhat = cache.normalized.row(r);
        let mut mean_d = T::zero();
        let mut mean_dx = T::zero();
        for c in 0..d {
            dxhat[c] = gy[c] * gamma.get(0, c);
            mean_d += dxhat[c];
            mean_dx += dxhat[c] * xhat[c];
        }
        mean_d /= dn;
        mean_dx /= dn;
        let rstd = cache.inv_std[r];
        for (c, g) in gx.row_mut(r).iter_mut().enumerate() {
            *g = rstd * (dxhat[c] - mean_d - xhat[c] * mean_dx);
        }
        for c in 0..d {
            let gg = ggamma.get(0, c) + gy[c] * xhat[c];
            ggamma.set(0, c, gg);
            let gb = gbeta.get(0, c) + gy[c];
            gbeta.set(0, c, gb);
        }
    }
    (gx, ggamma, gbeta)
}

/// Axis a softmax normalizes over.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// Each column sums to one.
    Rows,
    /// Each row sums to one.
    Cols,
}

fn softmax_slice_strided<T: Real>(data: &mut [T], start: usize, stride: usize, len: usize) {
    let mut max = T::neg_infinity();
    for i in 0..len {
        max = max.max(data[start + i * stride]);
    }
    let mut total = T::zero();
    for i in 0..len {
        let e = (data[start + i * stride] - max).exp();
        data[start + i * stride] = e;
        total += e;
    }
    for i in 0..len {
        data[start + i * stride] /= total;
    }
}

/// Max-subtracted softmax along `axis`.
pub fn softmax<T: Real>(x: &Tensor<T>, axis: Axis) -> Tensor<T> {
    let (rows, cols) = x.shape();
    let mut out = x.clone();
    let data = out.data_mut();
    match axis {
        Axis::Cols => {
            for r in 0..rows {
                softmax_slice_strided(data, r * cols, 1, cols);
            }
        }
        Axis::Rows => {
            for c in 0..cols {
                softmax_slice_strided(data, c, cols, rows);
            }
        }
    }
    out
}

fn check_groups<T: Real>(x: &Tensor<T>, k: usize, op: &'static str) -> Result<usize> {
    if k == 0 || x.rows() % k != 0 {
        return Err(Error::dim(
            op,
            format!("{} rows are not a multiple of group size {k}", x.rows()),
        ));
    }
    Ok(x.rows() / k)
}

/// Softmax over the `k` rows of each group, independently per column.
pub fn group_softmax<T: Real>(x: &Tensor<T>, k: usize) -> Result<Tensor<T>> {
    let groups = check_groups(x, k, "group_softmax")?;
    let cols = x.cols();
    let mut out = x.clone();
    let data = out.data_mut();
    for g in 0..groups {
        for c in 0..cols {
            softmax_slice_strided(data, g * k * cols + c, cols, k);
        }
    }
    Ok(out)
}

pub fn group_softmax_backward<T: Real>(
    probs: &Tensor<T>,
    grad_y: &Tensor<T>,
    k: usize,
) -> Result<Tensor<T>> {
    let groups = check_groups(probs, k, "group_softmax_backward")?;
    probs.expect_same_shape(grad_y, "group_softmax_backward")?;
    let cols = probs.cols();
    let mut gx = Tensor::zeros(probs.rows(), cols);
    for g in 0..groups {
        for c in 0..cols {
            let mut dot = T::zero();
            for i in 0..k {
                let r = g * k + i;
                dot += probs.get(r, c) * grad_y.get(r, c);
            }
            for i in 0..k {
                let r = g * k + i;
                gx.set(r, c, probs.get(r, c) * (grad_y.get(r, c) - dot));
            }
        }
    }
    Ok(gx)
}

/// Sum over the `k` rows of each group: `(M·k)×D → M×D`.
pub fn group_sum<T: Real>(x: &Tensor<T>, k: usize) -> Result<Tensor<T>> {
    let groups = check_groups(x, k, "group_sum")?;
    let mut out = Tensor::zeros(groups, x.cols());
    for g in 0..groups {
        for i in 0..k {
            let src = x.row(g * k + i);
            for (o, &v) in out.row_mut(g).iter_mut().zip(src) {
                *o += v;
            }
        }
    }
    Ok(out)
}

/// Channel-wise max over each group. Returns the pooled values and, per
/// output entry, the source row that won (first maximum in group order).
pub fn group_max<T: Real>(x: &Tensor<T>, k: usize) -> Result<(Tensor<T>, Vec<usize>)> {
    let groups = check_groups(x, k, "group_max")?;
    let cols = x.cols();
    let mut out = Tensor::zeros(groups, cols);
    let mut arg = vec![0usize; groups * cols];
    for g in 0..groups {
        for c in 0..cols {
            let mut best = g * k;
            for i in 1..k {
                if x.get(g * k + i, c) > x.get(best, c) {
                    best = g * k + i;
                }
            }
            out.set(g, c, x.get(best, c));
            arg[g * cols + c] = best;
        }
    }
    Ok((out, arg))
}
