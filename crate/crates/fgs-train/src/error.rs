//! Error type shared by the training crate.

use thiserror::Error;

/// Anything that can go wrong while configuring, training or evaluating
/// a factorized model.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error("model error: {0}")]
    Core(#[from] fgs_core::CoreError),

    #[error("render error: {0}")]
    Render(#[from] fgs_render::RenderError),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),
}
