//! Dense tensors and reverse-mode gradients.
//!
//! Graphs are built eagerly: every op computes its value on construction and
//! records backward closures against its parent nodes. [`Node::backward`]
//! then sweeps the graph once in reverse topological order and accumulates
//! gradients into each node's grad slot.

mod gradcheck;
mod node;
pub mod ops;
#[cfg(test)]
mod ops_tests;
pub mod rng;
mod tensor;

pub use gradcheck::grad_check;
pub use node::{Node, ParameterSet};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("index out of range: {0}")]
    OutOfRange(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, NumericsError>;
