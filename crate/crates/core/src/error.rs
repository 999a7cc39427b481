use thiserror::Error;

use crate::factored::IndexSubset;
use crate::synth::TrainingTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("subset {subset} is not contained in [{k}]")]
    InvalidSubset { subset: IndexSubset, k: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid tuple {tuple:?} for shape {shape:?}")]
    InvalidTuple {
        tuple: Vec<usize>,
        shape: Vec<usize>,
    },

    #[error("non-finite value at position {0}")]
    NonFinite(usize),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("probability {value} at row {row} is not strictly positive")]
    NonPositiveProbability { row: usize, value: f64 },

    #[error("row {row} sums to {sum}, not 1")]
    NotNormalized { row: usize, sum: f64 },

    #[error("logit {value} exceeds the overflow guard of ±{limit}")]
    LogitOverflow { value: f64, limit: f64 },

    #[error("fit diverged at iteration {iteration} (KL = {kl})")]
    Divergence {
        iteration: usize,
        kl: f64,
        trace: Box<TrainingTrace>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
