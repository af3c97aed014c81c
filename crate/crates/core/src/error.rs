use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("negative input {0} to success function")]
    NegativeInput(f64),

    #[error("allocation uses {total} of the unit budget")]
    BudgetExceeded { total: f64 },

    #[error("allocation has {got} entries but the instance has {expected} jobs")]
    JobCountMismatch { expected: usize, got: usize },

    #[error("allocation entry {index} is {value}; entries must be finite and non-negative")]
    InvalidAllocation { index: usize, value: f64 },

    #[error("confidence level {0} is outside (0, 1)")]
    InvalidDelta(f64),

    #[error("weight overflow: allocation {m} against upper reciprocal {upper}")]
    WeightOverflow { m: f64, upper: f64 },

    #[error("allocation {m} exceeds the current lower bound {lower}")]
    OverAllocation { m: f64, lower: f64 },

    #[error("initial lower bound for job {index} is {value}; must be positive and finite")]
    InvalidLowerBound { index: usize, value: f64 },

    #[error("brute-force search refuses {0} jobs (at most 4)")]
    TooManyJobs(usize),

    #[error("grid step {0} is outside (0, 0.1]")]
    InvalidGridStep(f64),

    #[error("minimax family needs 8n >= K >= 2, got n = {horizon}, K = {jobs}")]
    MinimaxPrecondition { horizon: u64, jobs: usize },

    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
