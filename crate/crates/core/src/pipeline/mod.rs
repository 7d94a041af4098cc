//! Sequential and joint training runs, evaluation and report output.

mod config;
mod report;
mod run;
mod synthetic;

use std::path::{Path, PathBuf};

pub use config::*;
pub use report::*;
pub use run::*;
pub use synthetic::*;

use crate::coreset::CoresetError;
use crate::metrics::MetricsError;
use crate::scoring::ScoringError;
use crate::tensor_io::TensorIoError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("capacity misconfiguration: {0}")]
    CapacityMisconfiguration(String),
    #[error(transparent)]
    Io(TensorIoError),
    #[error("stage {stage}: failed to load task {task}: {source}")]
    TaskLoad { stage: usize, task: String, source: TensorIoError },
    #[error(transparent)]
    Coreset(CoresetError),
    #[error("scoring task {task}: {source}")]
    Scoring { task: String, source: ScoringError },
    #[error("metrics for task {task}: {source}")]
    Metrics { task: String, source: MetricsError },
    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: std::io::Error },
    #[error("corrupt checkpoint: {0}")]
    Checkpoint(String),
}

impl PipelineError {
    pub(crate) fn file(path: &Path, source: std::io::Error) -> Self {
        PipelineError::File { path: path.to_path_buf(), source }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "invalid-config",
            PipelineError::CapacityMisconfiguration(_) => "capacity-misconfiguration",
            PipelineError::Io(e) => e.kind(),
            PipelineError::TaskLoad { .. } => "task-load-failure",
            PipelineError::Coreset(e) => e.kind(),
            PipelineError::Scoring { source, .. } => source.kind(),
            PipelineError::Metrics { source, .. } => source.kind(),
            PipelineError::File { .. } => "io-failure",
            PipelineError::Checkpoint(_) => "corrupt-checkpoint",
        }
    }
}
