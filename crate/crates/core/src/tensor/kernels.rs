//! Forward arithmetic shared by [`super::Graph`] and [`super::Eval`].

use super::flops::{record_elementwise, record_macs};
use super::gemm::gemm;
use super::Tensor;
use crate::error::{Error, Result};

// Weights for the elementwise tally.
const COST_LAYER_NORM: u64 = 8;
const COST_SOFTMAX: u64 = 4;
const COST_GELU: u64 = 8;

fn require_matrix(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    if t.shape().len() != 2 {
        return Err(Error::shape(op, t.shape(), &[0, 0]));
    }
    Ok((t.shape()[0], t.shape()[1]))
}

fn require_same(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, a.shape(), b.shape()));
    }
    Ok(())
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = require_matrix("matmul", a)?;
    let (k2, n) = require_matrix("matmul", b)?;
    if k != k2 {
        return Err(Error::shape("matmul", a.shape(), b.shape()));
    }
    let mut out = vec![0.0; m * n];
    gemm(m, k, n, a.data(), false, b.data(), false, 0.0, &mut out);
    record_macs((m * k * n) as u64);
    Tensor::matrix(m, n, out)
}

/// `a · bᵀ` without materialising the transpose.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = require_matrix("matmul_nt", a)?;
    let (n, k2) = require_matrix("matmul_nt", b)?;
    if k != k2 {
        return Err(Error::shape("matmul_nt", a.shape(), b.shape()));
    }
    let mut out = vec![0.0; m * n];
    gemm(m, k, n, a.data(), false, b.data(), true, 0.0, &mut out);
    record_macs((m * k * n) as u64);
    Tensor::matrix(m, n, out)
}

fn zip_with(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Tensor> {
    require_same(op, a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    record_elementwise(a.numel() as u64);
    Tensor::new(a.shape().to_vec(), data)
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_with("add", a, b, |x, y| x + y)
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_with("sub", a, b, |x, y| x - y)
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_with("mul", a, b, |x, y| x * y)
}

pub fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    record_elementwise(a.numel() as u64);
    let data = a.data().iter().map(|&x| f(x)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("shape preserved")
}

/// Adds `bias` (length `cols`) to every row of `a`.
pub fn add_bias(a: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (_, n) = require_matrix("add_bias", a)?;
    if bias.numel() != n {
        return Err(Error::shape("add_bias", a.shape(), bias.shape()));
    }
    let b = bias.data();
    let mut out = a.clone();
    for row in out.data_mut().chunks_exact_mut(n) {
        for (x, &bj) in row.iter_mut().zip(b) {
            *x += bj;
        }
    }
    record_elementwise(a.numel() as u64);
    Ok(out)
}

/// Row-wise softmax with per-row max subtraction.
pub fn softmax_rows(x: &Tensor) -> Result<Tensor> {
    let (_, n) = require_matrix("softmax_rows", x)?;
    if x.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite input to softmax".into()));
    }
    let mut out = x.clone();
    for row in out.data_mut().chunks_exact_mut(n) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        let inv = 1.0 / sum;
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
    record_elementwise(COST_SOFTMAX * x.numel() as u64);
    Ok(out)
}

/// Per-row statistics kept by layer normalisation for its backward pass.
#[derive(Clone, Debug)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub rstd: Vec<f64>,
}

pub fn layer_norm(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    eps: f64,
) -> Result<(Tensor, NormStats)> {
    let (m, d) = require_matrix("layer_norm", x)?;
    if gamma.numel() != d || beta.numel() != d {
        return Err(Error::shape("layer_norm", x.shape(), gamma.shape()));
    }
    let (g, b) = (gamma.data(), beta.data());
    let mut out = x.clone();
    let mut stats = NormStats {
        mean: Vec::with_capacity(m),
        rstd: Vec::with_capacity(m),
    };
    for row in out.data_mut().chunks_exact_mut(d) {
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let rstd = 1.0 / (var + eps).sqrt();
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - mean) * rstd * g[j] + b[j];
        }
        stats.mean.push(mean);
        stats.rstd.push(rstd);
    }
    record_elementwise(COST_LAYER_NORM * x.numel() as u64);
    Ok((out, stats))
}

/// Standard normal CDF.
pub fn phi_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

pub fn phi_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Exact GELU, `x·Φ(x)`.
pub fn gelu_scalar(x: f64) -> f64 {
    x * phi_cdf(x)
}

pub fn gelu_grad_scalar(x: f64) -> f64 {
    phi_cdf(x) + x * phi_pdf(x)
}

pub fn gelu(x: &Tensor) -> Tensor {
    record_elementwise((COST_GELU - 1) * x.numel() as u64);
    map(x, gelu_scalar)
}

pub fn slice_cols(x: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    let (m, n) = require_matrix("slice_cols", x)?;
    if len == 0 || start + len > n {
        return Err(Error::shape("slice_cols", x.shape(), &[start, len]));
    }
    let mut data = Vec::with_capacity(m * len);
    for row in x.data().chunks_exact(n) {
        data.extend_from_slice(&row[start..start + len]);
    }
    Tensor::matrix(m, len, data)
}

pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Usage("concat of zero tensors".into()))?;
    let m = require_matrix("concat_cols", first)?.0;
    let mut widths = Vec::with_capacity(parts.len());
    for p in parts {
        let (pm, pn) = require_matrix("concat_cols", p)?;
        if pm != m {
            return Err(Error::shape("concat_cols", first.shape(), p.shape()));
        }
        widths.push(pn);
    }
    let total: usize = widths.iter().sum();
    let mut data = Vec::with_capacity(m * total);
    for i in 0..m {
        for p in parts {
            data.extend_from_slice(p.row(i));
        }
    }
    Tensor::matrix(m, total, data)
}

pub fn sum(x: &Tensor) -> Tensor {
    record_elementwise(x.numel() as u64);
    Tensor::scalar(x.data().iter().sum())
}

/// Euclidean norm of all entries.
pub fn norm(x: &Tensor) -> Tensor {
    record_elementwise(2 * x.numel() as u64);
    Tensor::scalar(x.norm())
}
