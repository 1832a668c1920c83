use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure categories surfaced by the toolkit.
///
/// The CLI maps these onto exit codes through [`Error::category`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("input outside the numeric domain: {0}")]
    InputDomain(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("target class {target} out of range for {classes} classes")]
    InvalidTarget { target: usize, classes: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("label column `{0}` not found in header")]
    MissingLabelColumn(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("unsupported format version {found} (this build reads version {supported})")]
    VersionMismatch { found: u32, supported: u32 },

    #[error("checksum mismatch, file is corrupted")]
    Checksum,

    #[error("model kind mismatch: expected {expected}, file holds {found}")]
    KindMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Divergence {
        epoch: usize,
        batch: usize,
        loss: f64,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Coarse grouping used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Usage,
    Data,
    Divergence,
    Model,
    Io,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::InvalidConfig(_) | Error::MissingLabelColumn(_) => ErrorCategory::Usage,
            Error::Parse { .. } | Error::Data(_) | Error::InputDomain(_) => ErrorCategory::Data,
            Error::Divergence { .. } => ErrorCategory::Divergence,
            Error::Dimension { .. }
            | Error::InvalidTarget { .. }
            | Error::Format(_)
            | Error::VersionMismatch { .. }
            | Error::Checksum
            | Error::KindMismatch { .. } => ErrorCategory::Model,
            Error::Io(_) => ErrorCategory::Io,
        }
    }

    pub(crate) fn dim(what: &'static str, expected: usize, got: usize) -> Self {
        Error::Dimension {
            what,
            expected,
            got,
        }
    }
}
