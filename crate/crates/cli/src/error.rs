use std::path::Path;

use crate::checkpoint::CheckpointError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Dataset(#[from] grhd::dataset::DatasetError),
    #[error(transparent)]
    Model(#[from] grhd::model::ModelError),
    #[error(transparent)]
    Metrics(#[from] grhd::metrics::MetricsError),
    #[error("no training data: {0}")]
    NoTrainingData(String),
    #[error("no test data: {0}")]
    NoTestData(String),
    #[error("{0}")]
    Usage(String),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}
