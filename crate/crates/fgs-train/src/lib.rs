//! Training and evaluation for factorized gaussian splat models.
//!
//! The crate wires the factor model from `fgs-core` to the renderer in
//! `fgs-render`: [`pipeline`] runs the differentiable forward/backward
//! path, [`loss`] and [`ssim`] score rendered frames, [`trainer`] drives
//! Adam over every parameter array, [`eval`] measures held-out views and
//! [`toy`] builds small synthetic scenes with known ground truth.

pub mod config;
pub mod error;
pub mod eval;
pub mod loss;
pub mod pipeline;
pub mod ssim;
pub mod toy;
pub mod trainer;

pub use config::TrainConfig;
pub use error::TrainError;
pub use eval::{evaluate, evaluate_prepared, EvalReport, ViewMetrics};
pub use loss::{image_loss, l1_loss, l1_loss_grad, psnr, ImageLoss};
pub use pipeline::{
    backward, forward, prepare, render_view, ForwardPass, ModelGrads, PreparedScene,
    RenderSettings,
};
pub use ssim::{ssim, ssim_backward};
pub use toy::{generate_toy_scene, render_dense, ToyConfig, ToyScene};
pub use trainer::{EvalRow, LogRow, TrainReport, TrainView, Trainer};
