//! Dense tensors, a define-by-run reverse-mode tape and the Adam optimizer.
//!
//! Everything here runs at 64-bit precision. The tape is rebuilt for every
//! forward pass; parameters live in a [`ParamSet`] that owns both values and
//! gradient slots, and [`Graph::backward`] accumulates into those slots.

mod adam;
mod graph;
mod params;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use graph::{Gradients, Graph, Var};
pub use params::{uniform_init, ParamId, ParamSet};
pub use tensor::{
    conv3d, elu, gaussian_reparameterize, matmul, relu, sigmoid, standard_normal, Tensor,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("{op}: shape mismatch (expected {expected:?}, got {got:?})")]
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("duplicate parameter name `{0}`")]
    DuplicateParam(String),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, NumericsError>;

pub(crate) fn shape_err<T>(op: &'static str, expected: &[usize], got: &[usize]) -> Result<T> {
    Err(NumericsError::ShapeMismatch {
        op,
        expected: expected.to_vec(),
        got: got.to_vec(),
    })
}
