//! Structural similarity over RGB images, with an analytic gradient.
//!
//! Statistics come from an 11-tap separable Gaussian window (sigma 1.5)
//! with zero padding, evaluated per channel and averaged over every
//! pixel and channel. The backward pass pushes the per-pixel score
//! derivative back through the window convolutions; because the window
//! is symmetric, the adjoint of each blur is the same blur.

use crate::error::TrainError;

/// Window diameter in pixels.
pub const SSIM_WINDOW: usize = 11;
/// Gaussian sigma of the window.
pub const SSIM_SIGMA: f32 = 1.5;
/// Stabilizer on the luminance term, (0.01)^2 for unit-range images.
pub const SSIM_C1: f32 = 0.01 * 0.01;
/// Stabilizer on the contrast term, (0.03)^2 for unit-range images.
pub const SSIM_C2: f32 = 0.03 * 0.03;

/// Normalized window taps.
fn kernel() -> [f32; SSIM_WINDOW] {
    let mut taps = [0.0f32; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f32;
    let mut sum = 0.0f32;
    for (i, tap) in taps.iter_mut().enumerate() {
        let d = i as f32 - half;
        *tap = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *tap;
    }
    for tap in &mut taps {
        *tap /= sum;
    }
    taps
}

/// Separable blur with zero padding outside the image.
fn blur(plane: &[f32], width: usize, height: usize, taps: &[f32; SSIM_WINDOW]) -> Vec<f32> {
    let half = (SSIM_WINDOW / 2) as isize;
    let mut rows = vec![0.0f32; plane.len()];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        let out = &mut rows[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0f32;
            for (t, tap) in taps.iter().enumerate() {
                let sx = x as isize + t as isize - half;
                if sx >= 0 && (sx as usize) < width {
                    acc += tap * row[sx as usize];
                }
            }
            out[x] = acc;
        }
    }
    let mut out = vec![0.0f32; plane.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0f32;
            for (t, tap) in taps.iter().enumerate() {
                let sy = y as isize + t as isize - half;
                if sy >= 0 && (sy as usize) < height {
                    acc += tap * rows[sy as usize * width + x];
                }
            }
            out[y * width + x] = acc;
        }
    }
    out
}

fn channel_plane(image: &[f32], channel: usize) -> Vec<f32> {
    image.iter().skip(channel).step_by(3).copied().collect()
}

fn check_pair(a: &[f32], b: &[f32], width: usize, height: usize) -> Result<(), TrainError> {
    let want = width * height * 3;
    if want == 0 {
        return Err(TrainError::ShapeMismatch("empty image".into()));
    }
    if a.len() != want || b.len() != want {
        return Err(TrainError::ShapeMismatch(format!(
            "expected {want} values for {width}x{height} RGB, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Mean structural similarity between two RGB images.
pub fn ssim(a: &[f32], b: &[f32], width: usize, height: usize) -> Result<f64, TrainError> {
    let (value, _) = ssim_core(a, b, width, height, false)?;
    Ok(value)
}

/// Mean structural similarity plus its gradient with respect to the
/// first image.
pub fn ssim_backward(
    a: &[f32],
    b: &[f32],
    width: usize,
    height: usize,
) -> Result<(f64, Vec<f32>), TrainError> {
    let (value, grad) = ssim_core(a, b, width, height, true)?;
    Ok((value, grad.expect("gradient requested")))
}

fn ssim_core(
    a: &[f32],
    b: &[f32],
    width: usize,
    height: usize,
    with_grad: bool,
) -> Result<(f64, Option<Vec<f32>>), TrainError> {
    check_pair(a, b, width, height)?;
    let taps = kernel();
    let pixels = width * height;
    let inv_count = 1.0 / (pixels * 3) as f32;

    let mut total = 0.0f64;
    let mut grad = if with_grad { Some(vec![0.0f32; pixels * 3]) } else { None };

    for channel in 0..3 {
        let x = channel_plane(a, channel);
        let y = channel_plane(b, channel);
        let xx: Vec<f32> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f32> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f32> = x.iter().zip(&y).map(|(u, v)| u * v).collect();

        let mu1 = blur(&x, width, height, &taps);
        let mu2 = blur(&y, width, height, &taps);
        let f_xx = blur(&xx, width, height, &taps);
        let f_yy = blur(&yy, width, height, &taps);
        let f_xy = blur(&xy, width, height, &taps);

        // Per-pixel derivative fields with respect to mu1, blur(x*x)
        // and blur(x*y); filled only when a gradient is requested.
        let mut d_mu = vec![0.0f32; pixels];
        let mut d_xx = vec![0.0f32; pixels];
        let mut d_xy = vec![0.0f32; pixels];

        for p in 0..pixels {
            let m1 = mu1[p];
            let m2 = mu2[p];
            let var1 = f_xx[p] - m1 * m1;
            let var2 = f_yy[p] - m2 * m2;
            let cov = f_xy[p] - m1 * m2;

            let a1 = 2.0 * m1 * m2 + SSIM_C1;
            let a2 = 2.0 * cov + SSIM_C2;
            let b1 = m1 * m1 + m2 * m2 + SSIM_C1;
            let b2 = var1 + var2 + SSIM_C2;
            let den = b1 * b2;
            let score = (a1 * a2) / den;
            total += f64::from(score);

            if with_grad {
                let ds_dmu1 = 2.0 * m2 * a2 / den - score * 2.0 * m1 / b1;
                let ds_dvar1 = -score / b2;
                let ds_dcov = 2.0 * a1 / den;
                d_mu[p] = inv_count * (ds_dmu1 - 2.0 * m1 * ds_dvar1 - m2 * ds_dcov);
                d_xx[p] = inv_count * ds_dvar1;
                d_xy[p] = inv_count * ds_dcov;
            }
        }

        if let Some(grad) = grad.as_mut() {
            let back_mu = blur(&d_mu, width, height, &taps);
            let back_xx = blur(&d_xx, width, height, &taps);
            let back_xy = blur(&d_xy, width, height, &taps);
            for p in 0..pixels {
                grad[p * 3 + channel] =
                    back_mu[p] + 2.0 * x[p] * back_xx[p] + y[p] * back_xy[p];
            }
        }
    }

    Ok((total / (pixels * 3) as f64, grad))
}
