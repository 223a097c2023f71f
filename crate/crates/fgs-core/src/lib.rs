//! Core model for factorized Gaussian splatting.
//!
//! A scene is represented by a small set of factor blocks. Each block stores
//! per-axis coordinate and attribute factors whose cartesian/outer products
//! expand into a dense grid of 3D Gaussians, so `3*N` stored coordinates can
//! address `N^3` positions. A shared MLP decodes per-Gaussian feature vectors
//! into spherical-harmonic color coefficients and an opacity, and trainable
//! binary masks switch individual grid cells off so the expanded set can be
//! pruned without changing the rendered image.
//!
//! This crate owns the representation: block types and their expansion,
//! gradient accumulation back onto the factors, the decoder, masks, the
//! optimizer, point-cloud initialization, and model (de)serialization.
//! Rendering lives in `fgs-render`; the training loop in `fgs-train`.

pub mod adam;
pub mod decoder;
pub mod error;
pub mod factor;
pub mod gaussians;
pub mod init;
pub mod mask;
pub mod math;
pub mod model;
pub mod ply;
pub mod sh;

pub use error::CoreError;
