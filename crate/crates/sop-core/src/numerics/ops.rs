//! Shared numeric kernels. The tape's forward pass and the plain
//! inference paths call the exact same functions, which is what makes
//! "training-mode forward == inference forward" a structural fact rather
//! than a thing to test into existence.

use super::scalar::Scalar;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Dot product with eight independent accumulator lanes. The fixed lane
/// count keeps summation order deterministic while letting the optimizer
/// vectorize; a plain fold would serialize on one float dependency chain.
#[inline]
pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let mut lanes = [F::zero(); 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let i = c * 8;
        for l in 0..8 {
            lanes[l] += a[i + l] * b[i + l];
        }
    }
    let mut tail = F::zero();
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    let mut acc = tail;
    for lane in lanes {
        acc += lane;
    }
    acc
}

/// y += alpha * x
#[inline]
pub fn axpy<F: Scalar>(alpha: F, x: &[F], y: &mut [F]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

// ─── dense (affine) layer ────────────────────────────────────────────────

/// out[r, o] = bias[o] + <x[r, :], w[o, :]>   (w stored out_dim × in_dim)
pub fn dense_forward<F: Scalar>(
    x: &[F],
    rows: usize,
    in_dim: usize,
    w: &[F],
    out_dim: usize,
    bias: &[F],
    out: &mut [F],
) {
    debug_assert_eq!(x.len(), rows * in_dim);
    debug_assert_eq!(w.len(), out_dim * in_dim);
    debug_assert_eq!(bias.len(), out_dim);
    debug_assert_eq!(out.len(), rows * out_dim);
    for r in 0..rows {
        let xr = &x[r * in_dim..(r + 1) * in_dim];
        let or = &mut out[r * out_dim..(r + 1) * out_dim];
        for o in 0..out_dim {
            or[o] = bias[o] + dot(xr, &w[o * in_dim..(o + 1) * in_dim]);
        }
    }
}

/// dx[r, i] += sum_o g[r, o] * w[o, i]
pub fn dense_backward_input<F: Scalar>(
    g: &[F],
    rows: usize,
    out_dim: usize,
    w: &[F],
    in_dim: usize,
    dx: &mut [F],
) {
    for r in 0..rows {
        let gr = &g[r * out_dim..(r + 1) * out_dim];
        let dxr = &mut dx[r * in_dim..(r + 1) * in_dim];
        for o in 0..out_dim {
            axpy(gr[o], &w[o * in_dim..(o + 1) * in_dim], dxr);
        }
    }
}

/// dw[o, i] += sum_r g[r, o] * x[r, i];  db[o] += sum_r g[r, o]
pub fn dense_backward_params<F: Scalar>(
    g: &[F],
    rows: usize,
    out_dim: usize,
    x: &[F],
    in_dim: usize,
    dw: &mut [F],
    db: &mut [F],
) {
    for r in 0..rows {
        let gr = &g[r * out_dim..(r + 1) * out_dim];
        let xr = &x[r * in_dim..(r + 1) * in_dim];
        for o in 0..out_dim {
            axpy(gr[o], xr, &mut dw[o * in_dim..(o + 1) * in_dim]);
            db[o] += gr[o];
        }
    }
}

// ─── GELU ────────────────────────────────────────────────────────────────

/// Exact GELU: x * Phi(x), with Phi evaluated through erf in f64.
/// No tanh approximation — the cheap win is not worth a second truth.
#[inline]
pub fn gelu<F: Scalar>(x: F) -> F {
    let xf = x.to_f64_();
    F::from_f64_(xf * 0.5 * (1.0 + libm::erf(xf / std::f64::consts::SQRT_2)))
}

/// d/dx gelu = Phi(x) + x * phi(x)
#[inline]
pub fn gelu_grad<F: Scalar>(x: F) -> F {
    let xf = x.to_f64_();
    let phi_cdf = 0.5 * (1.0 + libm::erf(xf / std::f64::consts::SQRT_2));
    let phi_pdf = (-0.5 * xf * xf).exp() / (2.0 * std::f64::consts::PI).sqrt();
    F::from_f64_(phi_cdf + xf * phi_pdf)
}

pub fn gelu_slice<F: Scalar>(x: &[F], out: &mut [F]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o = gelu(v);
    }
}

// ─── row-wise LayerNorm ──────────────────────────────────────────────────

/// Per-row statistics the backward pass needs: the inverse denominator and
/// whether the row was constant (constant rows normalize to exact zeros and
/// backpropagate exact zeros, by definition).
#[derive(Debug, Clone)]
pub struct LayerNormCache<F: Scalar> {
    pub inv_denom: Vec<F>,
    pub constant: Vec<bool>,
}

/// y[r, :] = (x[r, :] - mean) / sqrt(pop_var + eps), no learned affine.
/// Statistics accumulate in f64 regardless of F. A row whose elements are
/// all bitwise equal maps to exact zeros — the mathematically correct
/// limit, which float round-off would otherwise miss.
pub fn layer_norm_rows<F: Scalar>(
    x: &[F],
    rows: usize,
    width: usize,
    eps: f64,
    out: &mut [F],
) -> LayerNormCache<F> {
    debug_assert!(width > 0);
    let mut cache = LayerNormCache {
        inv_denom: vec![F::zero(); rows],
        constant: vec![false; rows],
    };
    for r in 0..rows {
        let xr = &x[r * width..(r + 1) * width];
        let or = &mut out[r * width..(r + 1) * width];
        let first = xr[0];
        if xr.iter().all(|&v| v == first) {
            or.fill(F::zero());
            cache.constant[r] = true;
            continue;
        }
        let mut sum = 0.0f64;
        for &v in xr {
            sum += v.to_f64_();
        }
        let mean = sum / width as f64;
        let mut varsum = 0.0f64;
        for &v in xr {
            let d = v.to_f64_() - mean;
            varsum += d * d;
        }
        let inv = 1.0 / (varsum / width as f64 + eps).sqrt();
        for (o, &v) in or.iter_mut().zip(xr) {
            *o = F::from_f64_((v.to_f64_() - mean) * inv);
        }
        cache.inv_denom[r] = F::from_f64_(inv);
    }
    cache
}

/// dx[r,:] = inv * (g - mean(g) - y * mean(g ⊙ y)), the standard LayerNorm
/// gradient with y the normalized output. Constant rows get zero gradient.
pub fn layer_norm_backward<F: Scalar>(
    g: &[F],
    y: &[F],
    cache: &LayerNormCache<F>,
    rows: usize,
    width: usize,
    dx: &mut [F],
) {
    for r in 0..rows {
        if cache.constant[r] {
            continue; // exact-zero contribution
        }
        let gr = &g[r * width..(r + 1) * width];
        let yr = &y[r * width..(r + 1) * width];
        let dxr = &mut dx[r * width..(r + 1) * width];
        let mut gsum = 0.0f64;
        let mut gysum = 0.0f64;
        for i in 0..width {
            gsum += gr[i].to_f64_();
            gysum += gr[i].to_f64_() * yr[i].to_f64_();
        }
        let gmean = gsum / width as f64;
        let gymean = gysum / width as f64;
        let inv = cache.inv_denom[r].to_f64_();
        for i in 0..width {
            let v = inv * (gr[i].to_f64_() - gmean - yr[i].to_f64_() * gymean);
            dxr[i] += F::from_f64_(v);
        }
    }
}

// ─── losses ──────────────────────────────────────────────────────────────

/// Mean squared error over all elements, accumulated in f64.
pub fn mse<F: Scalar>(pred: &Tensor<F>, target: &Tensor<F>) -> Result<f64> {
    if !pred.same_shape(target) {
        return Err(Error::Shape(format!(
            "mse: prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    if pred.numel() == 0 {
        return Err(Error::Shape("mse over zero elements".into()));
    }
    let mut acc = 0.0f64;
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let d = p.to_f64_() - t.to_f64_();
        acc += d * d;
    }
    Ok(acc / pred.numel() as f64)
}

/// Mean absolute error over all elements, accumulated in f64.
pub fn mae<F: Scalar>(pred: &Tensor<F>, target: &Tensor<F>) -> Result<f64> {
    if !pred.same_shape(target) {
        return Err(Error::Shape(format!(
            "mae: prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    if pred.numel() == 0 {
        return Err(Error::Shape("mae over zero elements".into()));
    }
    let mut acc = 0.0f64;
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        acc += (p.to_f64_() - t.to_f64_()).abs();
    }
    Ok(acc / pred.numel() as f64)
}
