//! Multi-scale structure-aware human pose estimation.
//!
//! The pipeline: an MSS-net of stacked hourglasses supervised at every
//! decoder scale, an MSR-net head fusing all scales into the final heatmaps,
//! a structure-aware loss over a skeletal graph, keypoint-masking
//! augmentation, PCK/PCKh evaluation with conditional multi-trial inference,
//! and a synthetic stick-figure dataset for desk-scale experiments.

pub mod augmentation;
pub mod config;
pub mod data;
pub mod evaluation;
pub mod heatmaps;
pub mod losses;
pub mod model;
pub mod raster;
pub mod render;
pub mod rng;
pub mod skeleton;

pub use poseforge_nn as nn;

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error("annotation record {index}: field `{field}`: {message}")]
    Annotation {
        index: usize,
        field: String,
        message: String,
    },
    #[error("{path}: {message}")]
    Missing { path: PathBuf, message: String },
    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),
    #[error(transparent)]
    Nn(#[from] poseforge_nn::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    /// Whether the error stems from bad user input (as opposed to a failure
    /// inside the pipeline).
    pub fn is_user_error(&self) -> bool {
        match self {
            Error::InvalidConfig(_)
            | Error::InvalidInput(_)
            | Error::Format(_)
            | Error::Annotation { .. }
            | Error::Missing { .. }
            | Error::Json(_)
            | Error::Toml(_)
            | Error::Image(_) => true,
            Error::Io(e) => matches!(
                e.kind(),
                std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied
            ),
            Error::Shape(_) | Error::NonFiniteLoss(_) | Error::Nn(_) => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
