use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("gradient blow-up: non-finite value in {0}")]
    GradientBlowUp(String),

    #[error("sigma must be strictly positive, got {0}")]
    NonPositiveSigma(f64),

    #[error("no pending session for user {0}")]
    NoPendingSession(u64),

    #[error("session for user {0} has no requests")]
    EmptySession(u64),

    #[error("returning time must be finite and non-negative, got {0}")]
    InvalidReturningTime(f64),

    #[error("insufficient samples: requested {requested}, available {available}")]
    InsufficientSamples { requested: usize, available: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("session already ended for user {0}; open a new session first")]
    SessionClosed(u64),

    #[error("malformed session log at line {line}: {reason}")]
    MalformedLog { line: usize, reason: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("unknown algorithm '{0}'")]
    UnknownAlgorithm(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config file: {0}")]
    ConfigFormat(String),

    #[error("acceptance check failed: {0}")]
    AcceptanceFailed(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether this error represents a numerical abort (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::GradientBlowUp(_))
    }

    /// Process exit code: 2 for configuration problems, 3 for numerical
    /// aborts, 4 for failed acceptance checks, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) | Error::UnknownAlgorithm(_) | Error::ConfigFormat(_) => 2,
            Error::GradientBlowUp(_) => 3,
            Error::AcceptanceFailed(_) => 4,
            _ => 1,
        }
    }
}
