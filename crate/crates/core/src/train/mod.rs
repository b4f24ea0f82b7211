//! Losses, the Adam optimizer, early stopping and the epoch loop.

mod adam;
mod fit;
mod loss;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use fit::{fit, fit_with_hook, EarlyStopper, EpochMetrics, FitConfig, RunReport};
pub use loss::{bce_multilabel, softmax_cross_entropy, BCE_CLIP};
