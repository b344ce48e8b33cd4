//! Reverse-mode differentiation over a tape of tensor operations, with the
//! losses, optimizer and schedule used in training.

mod conv;
mod graph;
mod loss;
mod optim;
mod params;
mod schedule;
mod tensor;

pub mod gradcheck;

pub use conv::conv_out_len;
pub use graph::{BatchStats, BnMode, Gradients, Graph, Var};
pub use loss::{log_softmax_rows, ClassLossSpec};
pub use optim::{Adam, AdamConfig};
pub use params::{kaiming_uniform, ParamId, ParamStore};
pub use schedule::cosine_anneal;
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("epoch {epoch} outside schedule of {total} epochs")]
    InvalidSchedule { epoch: usize, total: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
