use super::Tensor;
use crate::error::Result;

/// The operation set the model is written against.
///
/// Implemented by [`super::Graph`] (records a tape for differentiation) and
/// [`super::Eval`] (values only). Both call the same kernels, so a forward
/// pass produces bit-identical values on either executor.
pub trait Backend {
    type Value: Clone;

    /// Introduces a value that takes no gradient.
    fn constant(&mut self, t: Tensor) -> Self::Value;
    fn value<'a>(&'a self, v: &'a Self::Value) -> &'a Tensor;

    fn shape<'a>(&'a self, v: &'a Self::Value) -> &'a [usize] {
        self.value(v).shape()
    }

    fn matmul(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    /// `a · bᵀ`.
    fn matmul_nt(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn sub(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn mul(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn scale(&mut self, a: &Self::Value, s: f64) -> Self::Value;
    fn add_scalar(&mut self, a: &Self::Value, s: f64) -> Self::Value;
    /// Adds a length-`cols` vector to every row.
    fn add_bias(&mut self, a: &Self::Value, bias: &Self::Value) -> Result<Self::Value>;
    fn softmax_rows(&mut self, a: &Self::Value) -> Result<Self::Value>;
    fn layer_norm(
        &mut self,
        x: &Self::Value,
        gamma: &Self::Value,
        beta: &Self::Value,
        eps: f64,
    ) -> Result<Self::Value>;
    fn gelu(&mut self, a: &Self::Value) -> Self::Value;
    fn slice_cols(&mut self, a: &Self::Value, start: usize, len: usize) -> Result<Self::Value>;
    fn concat_cols(&mut self, parts: &[Self::Value]) -> Result<Self::Value>;
    /// Sum of all entries, as a one-element tensor.
    fn sum(&mut self, a: &Self::Value) -> Self::Value;
    /// Euclidean norm of all entries, as a one-element tensor.
    fn norm(&mut self, a: &Self::Value) -> Self::Value;

    /// `x·w + b`, the affine map applied row by row.
    fn affine(
        &mut self,
        x: &Self::Value,
        w: &Self::Value,
        b: Option<&Self::Value>,
    ) -> Result<Self::Value> {
        let y = self.matmul(x, w)?;
        match b {
            Some(b) => self.add_bias(&y, b),
            None => Ok(y),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
    Scale,
}

/// Right-hand side of an elementwise operation.
#[derive(Clone, Copy, Debug)]
pub enum Operand<'a, V> {
    Tensor(&'a V),
    Scalar(f64),
}

/// Pointwise `a ∘ b` where `b` is a same-shaped tensor or a scalar.
/// `Scale` by a tensor is the Hadamard product.
pub fn elementwise<B: Backend>(
    backend: &mut B,
    op: ElementwiseOp,
    a: &B::Value,
    b: Operand<'_, B::Value>,
) -> Result<B::Value> {
    match (op, b) {
        (ElementwiseOp::Add, Operand::Tensor(b)) => backend.add(a, b),
        (ElementwiseOp::Sub, Operand::Tensor(b)) => backend.sub(a, b),
        (ElementwiseOp::Mul | ElementwiseOp::Scale, Operand::Tensor(b)) => backend.mul(a, b),
        (ElementwiseOp::Add, Operand::Scalar(s)) => Ok(backend.add_scalar(a, s)),
        (ElementwiseOp::Sub, Operand::Scalar(s)) => Ok(backend.add_scalar(a, -s)),
        (ElementwiseOp::Mul | ElementwiseOp::Scale, Operand::Scalar(s)) => Ok(backend.scale(a, s)),
    }
}
