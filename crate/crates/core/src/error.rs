use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the simulation and certification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("integer overflow computing {0}")]
    Overflow(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("rank {rank} out of range for dimension {dim}")]
    RankOutOfRange { rank: u64, dim: u64 },

    #[error("matrix is not unitary (residual {residual:.3e})")]
    NotUnitary { residual: f64 },

    #[error("matrix is not Hermitian (residual {residual:.3e})")]
    NotHermitian { residual: f64 },

    #[error("non-finite matrix entry")]
    NonFinite,

    #[error("unsupported input: {0}")]
    Unsupported(String),

    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("distribution is not normalized (sum {sum})")]
    NotNormalized { sum: f64 },

    #[error("degenerate partition: {0}")]
    DegeneratePartition(String),

    #[error("partition mismatch between coarse distributions")]
    PartitionMismatch,

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("run {run}: {source}")]
    Run {
        run: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than a failure while running.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::InvalidArgument(_)
            | Error::ShapeMismatch(_)
            | Error::RankOutOfRange { .. }
            | Error::Unsupported(_)
            | Error::Overflow(_)
            | Error::Format { .. }
            | Error::Json(_) => true,
            Error::Run { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
