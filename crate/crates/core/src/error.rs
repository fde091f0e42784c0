use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the falsification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("support violation: {what} = {value:e} is below the survival floor {floor:e}")]
    Support { what: String, value: f64, floor: f64 },

    #[error("{what} did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    Convergence {
        what: String,
        iterations: usize,
        grad_norm: f64,
    },

    #[error("singular Hessian while fitting {what}; consider setting a ridge penalty")]
    Singular { what: String },

    #[error("perfect separation suspected: coefficient norm {norm:.3} (bound {bound}); consider setting a ridge penalty")]
    Separation { norm: f64, bound: f64 },

    #[error("cannot fit {model} for stratum (s={s}, a={a}): {reason}")]
    Stratum {
        model: String,
        s: u8,
        a: u8,
        reason: String,
    },

    #[error("trimming removed every record")]
    AllTrimmed,

    #[error("non-finite {kind} signal at record {index}")]
    NonFinite { kind: String, index: usize },

    #[error("{failed} of {total} replications failed (limit 20%): {first_reason}")]
    TooManyFailures {
        failed: usize,
        total: usize,
        first_reason: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::InvalidArgument(_) | Error::Parse { .. } | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
