//! Inducing-point operator transformer for learning PDE solution operators.

pub mod attention;
pub mod bench;
pub mod data;
pub mod encoding;
pub mod error;
pub mod model;
pub mod parallel;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::{Backend, Eval, Graph, Tensor, Var};
