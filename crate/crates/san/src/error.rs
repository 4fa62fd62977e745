//! Error type shared across the crate.

use thiserror::Error;

/// Everything that can go wrong between config parsing and a finished run.
#[derive(Debug, Error)]
pub enum SanError {
    /// Two tensors (or a tensor and an expected layout) disagree on shape.
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// A class or domain label is outside the valid range.
    #[error("label {label} out of range for {classes} classes (row {row})")]
    LabelOutOfRange {
        label: usize,
        classes: usize,
        row: usize,
    },

    /// Invalid configuration value or combination.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A text input (CSV or config file) failed to parse.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// Filesystem trouble, annotated with the path involved.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Training produced a non-finite loss; the run is aborted.
    #[error("non-finite {what} at step {step}; run aborted")]
    NonFinite { what: String, step: usize },

    /// A runtime consistency check failed mid-run; aborting beats training
    /// on silently corrupt state.
    #[error("invariant violated at step {step}: {what}")]
    Invariant { what: String, step: usize },

    /// An input collection that must be non-empty was empty.
    #[error("empty {what}")]
    Empty { what: &'static str },

    /// Checkpoint (de)serialization failure.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, SanError>;

impl SanError {
    /// Helper for wrapping io::Error with the offending path.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        SanError::Io {
            path: path.into(),
            source,
        }
    }
}
