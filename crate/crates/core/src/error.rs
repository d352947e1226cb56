use thiserror::Error;

use crate::checkpoint::Checkpoint;

#[derive(Debug, Error)]
pub enum DsvbError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("domain error in {op}: {detail}")]
    DomainError { op: &'static str, detail: String },

    #[error("backward requires a scalar output, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),

    #[error("numerical divergence: {0}")]
    NumericalDivergence(String),

    /// Training produced a non-finite value. Carries the last checkpoint whose
    /// parameters were all finite, when one exists.
    #[error("training diverged at epoch {epoch} (batch {batch}): {reason}")]
    TrainingDiverged {
        epoch: usize,
        batch: usize,
        reason: String,
        last_good: Option<Box<Checkpoint>>,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row} (line {line}), column `{column}`: {detail}")]
    Parse {
        row: usize,
        line: usize,
        column: String,
        detail: String,
    },

    #[error("sequence of length {len} is shorter than window length {seq_len}")]
    TooShort { len: usize, seq_len: usize },

    #[error("unstable simulator configuration: {0}")]
    UnstableConfig(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("unknown scenario {0} (expected 1..=4)")]
    UnknownScenario(u32),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl DsvbError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        DsvbError::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn domain(op: &'static str, detail: impl Into<String>) -> Self {
        DsvbError::DomainError {
            op,
            detail: detail.into(),
        }
    }

    /// True for errors caused by non-finite numbers rather than bad input.
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            DsvbError::NumericalDivergence(_) | DsvbError::TrainingDiverged { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, DsvbError>;
