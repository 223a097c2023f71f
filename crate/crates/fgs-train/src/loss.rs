//! Photometric losses: mean absolute error, structural term and PSNR.

use crate::error::TrainError;
use crate::ssim::{ssim, ssim_backward};

/// Mean absolute error between two equally sized buffers.
pub fn l1_loss(a: &[f32], b: &[f32]) -> Result<f64, TrainError> {
    check_lens(a, b)?;
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| f64::from((x - y).abs()))
        .sum();
    Ok(sum / a.len() as f64)
}

/// Gradient of [`l1_loss`] with respect to the first buffer. Exact ties
/// contribute zero.
pub fn l1_loss_grad(a: &[f32], b: &[f32]) -> Result<Vec<f32>, TrainError> {
    check_lens(a, b)?;
    let inv = 1.0 / a.len() as f32;
    Ok(a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            if x > y {
                inv
            } else if x < y {
                -inv
            } else {
                0.0
            }
        })
        .collect())
}

/// Peak signal-to-noise ratio in dB assuming unit peak, capped at 99
/// so identical images stay finite.
pub fn psnr(a: &[f32], b: &[f32]) -> Result<f64, TrainError> {
    check_lens(a, b)?;
    let mse: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum::<f64>()
        / a.len() as f64;
    if mse <= 0.0 {
        return Ok(99.0);
    }
    Ok((-10.0 * mse.log10()).min(99.0))
}

/// Breakdown of the photometric objective for one view.
#[derive(Debug, Clone, Copy)]
pub struct ImageLoss {
    /// Blended objective `(1 - lambda) * l1 + lambda * (1 - ssim)`.
    pub total: f64,
    /// Mean absolute error component.
    pub l1: f64,
    /// Structural dissimilarity component, `1 - ssim`.
    pub dssim: f64,
}

/// Photometric objective and its gradient with respect to the render.
pub fn image_loss(
    render: &[f32],
    target: &[f32],
    width: usize,
    height: usize,
    lambda_dssim: f32,
) -> Result<(ImageLoss, Vec<f32>), TrainError> {
    let want = width * height * 3;
    if render.len() != want || target.len() != want {
        return Err(TrainError::ShapeMismatch(format!(
            "expected {want} values for {width}x{height} RGB, got {} and {}",
            render.len(),
            target.len()
        )));
    }
    let lambda = f64::from(lambda_dssim);
    let l1 = l1_loss(render, target)?;
    let l1_grad = l1_loss_grad(render, target)?;
    if lambda == 0.0 {
        // Skip the window convolutions entirely when the structural
        // term carries no weight; still report its value for logging.
        let s = ssim(render, target, width, height)?;
        let loss = ImageLoss {
            total: l1,
            l1,
            dssim: 1.0 - s,
        };
        return Ok((loss, l1_grad));
    }
    let (s, s_grad) = ssim_backward(render, target, width, height)?;
    let loss = ImageLoss {
        total: (1.0 - lambda) * l1 + lambda * (1.0 - s),
        l1,
        dssim: 1.0 - s,
    };
    let l1_weight = 1.0 - lambda_dssim;
    let grad = l1_grad
        .iter()
        .zip(&s_grad)
        .map(|(&g1, &gs)| l1_weight * g1 - lambda_dssim * gs)
        .collect();
    Ok((loss, grad))
}

fn check_lens(a: &[f32], b: &[f32]) -> Result<(), TrainError> {
    if a.len() != b.len() || a.is_empty() {
        return Err(TrainError::ShapeMismatch(format!(
            "buffers must match and be non-empty, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}
