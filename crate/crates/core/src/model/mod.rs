//! The disentangling network, its joint loss and the training loop.
//!
//! Layer table (defaults in parentheses, `M` mel bands, `F` frames):
//!
//! | stage | layer | output |
//! |---|---|---|
//! | temporal | conv1d 1→t (k = frame, s = hop), relu | `t×F` |
//! | temporal | conv1d t→t (k 3, p 1), relu | `t×F` |
//! | temporal | conv1d t→M (k 3, p 1) | `M×F` |
//! | fusion | stack with standardized log-mel | `2×M×F` |
//! | backbone | 3 × [conv 3×3 s2 p1, batch-norm, relu] (32, 64, 128) | `C×⌈M/8⌉×⌈F/8⌉` |
//! | section head | conv 3×3 s1 p1, batch-norm, relu → `z_sec`; pool, dense | sections |
//! | attribute head | same on `z_sec` → `z_att`; pool, dense | groups |
//! | reversal classifier | reverse(z_rev); pool, dense (128), relu, dense | groups |

mod config;
mod features;
mod loss;
mod network;
pub mod selfcheck;
mod train;

pub use config::{LossWeights, ModelConfig, TrainConfig};
pub use features::{prepare_features, Batch, ClipFeatures, LabelledSet};
pub use loss::{grhd_loss, LossBreakdown, LossSpec, LossVars};
pub use network::{BackboneOutput, Embedding, ForwardOutput, GrhdModel, HeadsOutput, Inference, Mode, Reversal};
pub use train::{lambda_schedule, train, TrainOutcome};

use crate::autodiff::AutodiffError;
use crate::dataset::DatasetError;
use crate::dsp::DspError;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no training data: {0}")]
    NoTrainingData(String),
    #[error("progress {progress} outside [0, 1] or gain {gain} not positive")]
    InvalidSchedule { progress: f64, gain: f64 },
    #[error("loss diverged at epoch {epoch}, batch {batch}: {detail}")]
    DivergenceDetected {
        epoch: usize,
        batch: usize,
        detail: String,
    },
    #[error("clip {clip}: {reason}")]
    UnlabelledClip { clip: String, reason: String },
}
