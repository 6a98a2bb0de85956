use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, ObserverError>;

#[derive(Debug, Error)]
pub enum ObserverError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    /// Bad magic, unsupported version or dtype.
    #[error("format error: {0}")]
    Format(String),

    /// Payload shorter than the header promises.
    #[error("corrupt stream: {0}")]
    Corruption(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {actual})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("insufficient data: class {class} has {count} images, need at least {needed}")]
    InsufficientData {
        class: u8,
        count: usize,
        needed: usize,
    },

    /// Cholesky breakdown; `minor` is the 0-based index of the failing leading minor.
    #[error("matrix is not positive definite: leading minor {minor} has pivot {pivot:e}")]
    Singular { minor: usize, pivot: f64 },

    /// A new channel adds no variance beyond the existing ones.
    #[error("degenerate channel: Schur complement {schur:e} at or below tolerance {tol:e}")]
    DegenerateChannel { schur: f64, tol: f64 },

    /// Channelized covariance is singular; lists channel rows that depend on earlier rows.
    #[error("channelized covariance is singular; dependent channel rows: {rows:?}")]
    DependentChannels { rows: Vec<usize> },

    #[error("degenerate task: {0}")]
    DegenerateTask(String),

    #[error("ingestion error in {path}: {reason}")]
    Ingestion { path: String, reason: String },
}

impl ObserverError {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        ObserverError::Validation(msg.into())
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(ObserverError::DimensionMismatch {
            what,
            expected,
            actual,
        })
    }
}
