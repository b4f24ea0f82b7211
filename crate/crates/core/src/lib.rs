//! Convolutional Kolmogorov-Arnold networks: tensors, spline bases, layers,
//! models, training, evaluation, data loading and sweep orchestration.

pub mod arch;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod layers;
pub mod model;
pub mod par;
pub mod scalar;
pub mod spline;
pub mod sweep;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use par::Exec;
pub use scalar::{Scalar, Width};
pub use tensor::Tensor;
