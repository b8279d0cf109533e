//! Error type shared across the crate.

use std::path::PathBuf;

/// Errors produced by data validation, solvers and I/O.
#[derive(Debug, thiserror::Error)]
pub enum DstlError {
    /// Input data violates a precondition (non-finite values, empty matrices, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Shapes of the operands do not conform.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A request cannot be satisfied by the given data (e.g. K larger than the pool).
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// A numerical procedure failed to produce a usable result.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A per-column operation failed; carries the offending column index.
    #[error("column {column}: {source}")]
    Column {
        column: usize,
        #[source]
        source: Box<DstlError>,
    },

    /// Run configuration is invalid or incomplete.
    #[error("config error: {0}")]
    Config(String),

    /// Filesystem access failed.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// An archive or data file does not match the expected format.
    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

impl DstlError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DstlError::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        DstlError::Format { path: path.into(), reason: reason.into() }
    }

    /// Process exit code for the CLI: 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            DstlError::Config(_) => 2,
            DstlError::InvalidInput(_)
            | DstlError::DimensionMismatch(_)
            | DstlError::Infeasible(_)
            | DstlError::Io { .. }
            | DstlError::Format { .. } => 3,
            DstlError::Numerical(_) => 4,
            DstlError::Column { source, .. } => source.exit_code(),
        }
    }
}

pub type Result<T> = std::result::Result<T, DstlError>;
