//! Crate-wide error type and result alias.

use std::path::PathBuf;
use thiserror::Error;

/// Errors shared by every module in this crate.
#[derive(Debug, Error)]
pub enum GmmdError {
    /// An operation received an empty collection where at least one element
    /// is required (empty point cloud, empty bandwidth list, ...).
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// Two objects that must live in the same space have different dimensions.
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: &'static str,
    },

    /// Two collections that must be aligned row-for-row have different sizes.
    #[error("size mismatch in {context}: {left} vs {right}")]
    SizeMismatch {
        left: usize,
        right: usize,
        context: &'static str,
    },

    /// A scalar or structural parameter is out of its admissible range.
    #[error("invalid parameter `{name}`: {message}")]
    InvalidParameter { name: &'static str, message: String },

    /// A NaN or infinity appeared where a finite value is required.
    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },

    /// Training produced a non-finite loss or gradient and was aborted.
    #[error("numerical failure at epoch {epoch}: {detail}")]
    NumericalFailure { epoch: usize, detail: String },

    /// A coupling row or column carries no mass, so the barycentric image of
    /// the corresponding point is undefined.
    #[error("zero marginal mass for {axis} index {index}: barycentric image undefined")]
    ZeroMarginal { axis: &'static str, index: usize },

    /// Filesystem-level failure, annotated with the offending path.
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file had the right location but the wrong contents; `line` is 1-based.
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// A configuration document is malformed (unknown key, bad value, ...).
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, GmmdError>;
