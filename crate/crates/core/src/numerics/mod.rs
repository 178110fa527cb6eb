//! Dense `f64` tensors, a reverse-mode tape, and a finite-difference oracle.

mod check;
mod graph;
mod tensor;

pub use check::{finite_difference_gradient, relative_error};
pub use graph::{ComputeGraph, Var};
pub use tensor::{masked_softmax, MaskMatrix, Tensor};


/// Additive mask value for blocked attention cells.
pub const NEG_INF: f64 = -1e9;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NumericsError {
    #[error("dimension error: {0}")]
    Shape(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, NumericsError>;
