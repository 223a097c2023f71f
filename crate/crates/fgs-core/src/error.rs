//! Error type shared across the core crate.

use thiserror::Error;

/// Errors produced by model construction, expansion, initialization and
/// serialization.
#[derive(Debug, Error)]
pub enum CoreError {
    /// An array has a length inconsistent with the declared shape.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A block or model violates a structural invariant.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// An input value is NaN or infinite where a finite value is required.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// An input point set is empty.
    #[error("empty point set")]
    EmptyPointSet,

    /// A function argument is outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An optimization run produced NaN/Inf and was aborted.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// A serialized model or point cloud could not be parsed.
    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
