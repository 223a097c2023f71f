//! Differentiable software rasterizer for 3D Gaussians.
//!
//! The crate covers the camera model, the perspective projection of
//! anisotropic Gaussians to screen-space splats, tile-based front-to-back
//! alpha compositing, and analytic gradients for every splat attribute,
//! so a training loop can chain image losses all the way back to the
//! Gaussian parameters. Scene I/O (PNG images and the camera-transform
//! JSON layout used by synthetic datasets) lives here too.

pub mod camera;
pub mod covariance;
pub mod error;
pub mod project;
pub mod rasterize;
pub mod scene;

pub use camera::Camera;
pub use covariance::{build_covariance, covariance_backward, rotation_matrix};
pub use error::RenderError;
pub use project::{
    project_backward, project_gaussian, project_gaussians, GaussianInput, ProjectedGrads, Splat,
};
pub use rasterize::{
    rasterize, rasterize_backward, sort_by_depth, RasterizeOptions, RenderOutput, SplatGrads,
};
pub use scene::{load_image, save_image, TransformFrame, TransformSet};
