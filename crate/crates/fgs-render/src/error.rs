//! Renderer error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("malformed scene data: {0}")]
    Format(String),

    #[error("image: {0}")]
    Image(#[from] image::ImageError),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}
