//! Reverse-mode automatic differentiation over dense `f64` tensors, plus the
//! network pieces and optimiser used for training.

mod adam;
pub mod checkpoint;
mod nn;
mod ops;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use nn::{
    bind, bind_constant, named_leaves, pointnet_encode, pointnet_params, replace_leaves, Activation, Linear, Mlp,
    ParamTree,
};
pub use ops::weighted_sum;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("invalid tensor shape {0:?}")]
    BadShape(Vec<usize>),
    #[error("shape {shape:?} needs {} elements, got {len}", shape.iter().product::<usize>())]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("loss must be a single element, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("row index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("{params} parameters, {grads} gradients and {state} optimiser slots do not line up")]
    ParamCount { params: usize, grads: usize, state: usize },
    #[error("{0}: non-finite input")]
    NonFinite(&'static str),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
