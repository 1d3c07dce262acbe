use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty calibration set")]
    EmptyCalibration,

    #[error("non-finite nonconformity score")]
    NonFiniteScore,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("latent dynamics diverged at step {step}")]
    LatentDiverged { step: usize },

    #[error("coalescence integration diverged at t = {time_s} s")]
    CoalescenceDiverged { time_s: f64 },

    #[error("rank-deficient design matrix ({0}); use a positive ridge parameter")]
    RankDeficient(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("fold {fold} failed: {source}")]
    FoldFailed {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("model is not fitted: {0}")]
    NotFitted(&'static str),

    #[error("file format error: {0}")]
    Format(String),

    #[error("unsupported schema version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of numerical procedures, as opposed to bad inputs or I/O.
    pub fn is_numerical(&self) -> bool {
        if let Error::FoldFailed { source, .. } = self {
            return source.is_numerical();
        }
        matches!(
            self,
            Error::NonFiniteScore
                | Error::LatentDiverged { .. }
                | Error::CoalescenceDiverged { .. }
                | Error::RankDeficient(_)
                | Error::Training(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
