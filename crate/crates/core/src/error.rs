use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("edge probability {0} is outside [0, 1]")]
    InvalidProbability(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("graph contains a cycle")]
    Cyclic,

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("intervention has {targets} targets but {values} values")]
    InterventionMismatch { targets: usize, values: usize },

    #[error("no builtin nonlinear SCM numbered {0} (expected 1 or 2)")]
    UnknownBuiltin(u8),

    #[error("could not draw a well-conditioned mixing matrix after {attempts} attempts (seed {seed})")]
    MixingRetryExhausted { seed: u64, attempts: usize },

    #[error("matrix is singular or ill-conditioned (condition number {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("covariance is rank deficient: eigenvalue {eigenvalue:e} at component {component}")]
    RankDeficient { component: usize, eigenvalue: f64 },

    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad file format: {0}")]
    Format(String),

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("checksum mismatch")]
    Checksum,

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by numerics rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_) | Error::IllConditioned { .. } | Error::RankDeficient { .. }
        )
    }
}
