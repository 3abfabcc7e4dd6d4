//! Small CPU tensor engine with reverse-mode autodiff, sized for desk-scale
//! convolutional pose networks.
//!
//! Batch items are processed data-parallel through [`par`]; building without
//! the default `parallel` feature swaps every parallel loop for a plain one.

pub mod graph;
pub mod kernels;
pub mod optim;
pub mod par;
pub mod params;
pub mod tensor;

pub use graph::{Graph, Var};
pub use kernels::Interp;
pub use optim::{Adam, Sgd};
pub use params::{Grads, ParamId, ParamStore};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
