//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum N2dError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed file contents (bad magic bytes, truncated payload, ...).
    #[error("format error: {0}")]
    Format(String),

    /// Inputs that are individually valid but mutually inconsistent.
    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    Dimension {
        what: String,
        expected: usize,
        actual: usize,
    },

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },

    /// Numerical routine failed (singular matrix, NaN in layout, fit did
    /// not converge, ...). Carries diagnostics for the caller.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error: {0}")]
    Config(String),

    /// Input exceeds a configured O(n^2) memory guard.
    #[error("{what}: n={n} exceeds the memory guard limit of {limit} (override the guard to force)")]
    MemoryGuard {
        what: String,
        n: usize,
        limit: usize,
    },

    /// A pipeline stage failed; wraps the underlying error with the stage name.
    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<N2dError>,
    },
}

impl From<csv::Error> for N2dError {
    fn from(e: csv::Error) -> Self {
        N2dError::Format(format!("csv: {e}"))
    }
}

impl N2dError {
    pub fn in_stage(self, stage: &str) -> Self {
        N2dError::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, N2dError>;
