//! Anomalous sound detection under domain shift with gradient-reversal
//! feature disentanglement and hierarchical section / attribute-group
//! classifiers.

pub mod autodiff;
pub mod dataset;
pub mod dsp;
pub mod metrics;
pub mod model;
pub mod scalar;

pub use scalar::{DType, Scalar};
