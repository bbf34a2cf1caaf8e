use std::sync::Arc;

use super::{kernels, Backend, Tensor};
use crate::error::Result;

/// Value-only executor. Intermediates are reference counted and freed as
/// soon as the caller drops them, which keeps large inference passes lean.
#[derive(Clone, Copy, Debug, Default)]
pub struct Eval;

impl Backend for Eval {
    type Value = Arc<Tensor>;

    fn constant(&mut self, t: Tensor) -> Arc<Tensor> {
        Arc::new(t)
    }

    fn value<'a>(&'a self, v: &'a Arc<Tensor>) -> &'a Tensor {
        v
    }

    fn matmul(&mut self, a: &Arc<Tensor>, b: &Arc<Tensor>) -> Result<Arc<Tensor>> {
        kernels::matmul(a, b).map(Arc::new)
    }

    fn matmul_nt(&mut self, a: &Arc<Tensor>, b: &Arc<Tensor>) -> Result<Arc<Tensor>> {
        kernels::matmul_nt(a, b).map(Arc::new)
    }

    fn add(&mut self, a: &Arc<Tensor>, b: &Arc<Tensor>) -> Result<Arc<Tensor>> {
        kernels::add(a, b).map(Arc::new)
    }

    fn sub(&mut self, a: &Arc<Tensor>, b: &Arc<Tensor>) -> Result<Arc<Tensor>> {
        kernels::sub(a, b).map(Arc::new)
    }

    fn mul(&mut self, a: &Arc<Tensor>, b: &Arc<Tensor>) -> Result<Arc<Tensor>> {
        kernels::mul(a, b).map(Arc::new)
    }

    fn scale(&mut self, a: &Arc<Tensor>, s: f64) -> Arc<Tensor> {
        Arc::new(kernels::map(a, |x| x * s))
    }

    fn add_scalar(&mut self, a: &Arc<Tensor>, s: f64) -> Arc<Tensor> {
        Arc::new(kernels::map(a, |x| x + s))
    }

    fn add_bias(&mut self, a: &Arc<Tensor>, bias: &Arc<Tensor>) -> Result<Arc<Tensor>> {
        kernels::add_bias(a, bias).map(Arc::new)
    }

    fn softmax_rows(&mut self, a: &Arc<Tensor>) -> Result<Arc<Tensor>> {
        kernels::softmax_rows(a).map(Arc::new)
    }

    fn layer_norm(
        &mut self,
        x: &Arc<Tensor>,
        gamma: &Arc<Tensor>,
        beta: &Arc<Tensor>,
        eps: f64,
    ) -> Result<Arc<Tensor>> {
        kernels::layer_norm(x, gamma, beta, eps).map(|(y, _)| Arc::new(y))
    }

    fn gelu(&mut self, a: &Arc<Tensor>) -> Arc<Tensor> {
        Arc::new(kernels::gelu(a))
    }

    fn slice_cols(&mut self, a: &Arc<Tensor>, start: usize, len: usize) -> Result<Arc<Tensor>> {
        kernels::slice_cols(a, start, len).map(Arc::new)
    }

    fn concat_cols(&mut self, parts: &[Arc<Tensor>]) -> Result<Arc<Tensor>> {
        let refs: Vec<&Tensor> = parts.iter().map(|p| p.as_ref()).collect();
        kernels::concat_cols(&refs).map(Arc::new)
    }

    fn sum(&mut self, a: &Arc<Tensor>) -> Arc<Tensor> {
        Arc::new(kernels::sum(a))
    }

    fn norm(&mut self, a: &Arc<Tensor>) -> Arc<Tensor> {
        Arc::new(kernels::norm(a))
    }
}
