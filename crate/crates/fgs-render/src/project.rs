//! Projection of 3D Gaussians into screen-space splats.
//!
//! Each Gaussian's covariance is pushed through the local affine
//! approximation of the perspective map (the classic EWA construction):
//! with `W` the camera rotation and `J` the Jacobian of the pinhole
//! projection at the Gaussian center, the 2D covariance is
//! `J W Sigma W^T J^T` plus a 0.3-pixel isotropic blur that keeps every
//! splat at least a fraction of a pixel wide. The stored footprint
//! radius bounds the set of pixels whose alpha can reach the blending
//! cutoff, which is what makes tiled and brute-force rasterization
//! agree exactly.

use rayon::prelude::*;

use fgs_core::sh::{sh_color_backward, sh_color_free, SH_COEFFS};

use crate::camera::Camera;
use crate::covariance::{build_covariance, covariance_backward};
use crate::error::RenderError;

/// One Gaussian ready for projection: renderable attributes only
/// (positive scales, unit quaternion, opacity inside the unit interval).
#[derive(Debug, Clone)]
pub struct GaussianInput {
    pub position: [f32; 3],
    pub scale: [f32; 3],
    /// Unit quaternion `(w, x, y, z)`.
    pub rotation: [f32; 4],
    /// Spherical-harmonic color coefficients, `sh[basis * 3 + channel]`.
    pub sh: [f32; SH_COEFFS],
    pub opacity: f32,
}

/// A projected Gaussian in screen space.
#[derive(Debug, Clone, Copy)]
pub struct Splat {
    /// Pixel-space center `(u, v)`.
    pub mean2d: [f32; 2],
    /// 2D covariance `(m00, m01, m11)` including the pixel blur.
    pub cov2d: [f32; 3],
    /// Inverse covariance `(a, b, c)`; the blending exponent for an
    /// offset `(dx, dy)` is `q = a dx^2 + 2 b dx dy + c dy^2`.
    pub conic: [f32; 3],
    /// Camera-space depth used for back-to-front ordering.
    pub depth: f32,
    /// View-dependent color evaluated at the Gaussian center.
    pub rgb: [f32; 3],
    pub opacity: f32,
    /// Pixel radius beyond which alpha is provably below the cutoff.
    /// Infinite when the cutoff is disabled.
    pub radius: f32,
    /// Index of the source Gaussian in the projected batch.
    pub source: u32,
}

/// Gradients of a scalar loss with respect to one projected Gaussian's
/// inputs. The rotation gradient is with respect to the unit
/// quaternion; chain through normalization for raw factor products.
#[derive(Debug, Clone)]
pub struct ProjectedGrads {
    pub position: [f32; 3],
    pub scale: [f32; 3],
    pub rotation: [f32; 4],
    pub sh: [f32; SH_COEFFS],
    pub opacity: f32,
}

/// Blur added to both eigenvalues of the 2D covariance, in pixels^2.
pub const COV2D_BLUR: f32 = 0.3;

fn screen_cov(input: &GaussianInput, camera: &Camera) -> ([f32; 3], [[f32; 2]; 3], [f32; 3]) {
    let p = camera.world_to_camera(input.position);
    let [x, y, z] = p;
    let j00 = camera.fx / z;
    let j02 = -camera.fx * x / (z * z);
    let j11 = camera.fy / z;
    let j12 = -camera.fy * y / (z * z);
    let w = &camera.rotation;
    // a = J * W, with J sparse: row 0 uses camera rows 0 and 2, row 1
    // uses rows 1 and 2. Stored column-major as [[f32; 2]; 3].
    let mut a = [[0.0f32; 2]; 3];
    for c in 0..3 {
        a[c][0] = j00 * w[0][c] + j02 * w[2][c];
        a[c][1] = j11 * w[1][c] + j12 * w[2][c];
    }
    let sigma = build_covariance(input.scale, input.rotation);
    // m = a^T * sigma * a (2x2), plus the pixel blur on the diagonal.
    let mut sa = [[0.0f32; 2]; 3];
    for i in 0..3 {
        for r in 0..2 {
            sa[i][r] = sigma[i][0] * a[0][r] + sigma[i][1] * a[1][r] + sigma[i][2] * a[2][r];
        }
    }
    let m00 = a[0][0] * sa[0][0] + a[1][0] * sa[1][0] + a[2][0] * sa[2][0] + COV2D_BLUR;
    let m01 = a[0][0] * sa[0][1] + a[1][0] * sa[1][1] + a[2][0] * sa[2][1];
    let m11 = a[0][1] * sa[0][1] + a[1][1] * sa[1][1] + a[2][1] * sa[2][1] + COV2D_BLUR;
    ([m00, m01, m11], a, p)
}

/// Projects one Gaussian, returning `None` when it cannot contribute:
/// behind the near plane, opacity below the alpha cutoff, or footprint
/// entirely outside the image. A non-positive `alpha_cutoff` disables
/// the opacity cull and gives the splat an infinite footprint.
pub fn project_gaussian(
    input: &GaussianInput,
    camera: &Camera,
    alpha_cutoff: f32,
    source: u32,
) -> Option<Splat> {
    let ([m00, m01, m11], _, p_cam) = {
        let p = camera.world_to_camera(input.position);
        if !(p[2] > camera.near) {
            return None;
        }
        screen_cov(input, camera)
    };
    let det = m00 * m11 - m01 * m01;
    if !(det > 0.0) {
        return None;
    }
    let conic = [m11 / det, -m01 / det, m00 / det];
    let radius = if alpha_cutoff > 0.0 {
        if input.opacity < alpha_cutoff {
            return None;
        }
        // Largest eigenvalue of the 2D covariance bounds the Mahalanobis
        // shrink: q >= |d|^2 / lambda_max, so alpha falls below the
        // cutoff beyond sqrt(2 ln(opacity / cutoff)) deviations.
        let mid = 0.5 * (m00 + m11);
        let half_diff = 0.5 * (m00 - m11);
        let lambda_max = mid + (half_diff * half_diff + m01 * m01).sqrt();
        lambda_max.sqrt() * (2.0 * (input.opacity / alpha_cutoff).ln()).max(0.0).sqrt()
    } else {
        f32::INFINITY
    };
    let [x, y, z] = p_cam;
    let mean2d = [camera.fx * x / z + camera.cx, camera.fy * y / z + camera.cy];
    if mean2d[0] + radius < 0.0
        || mean2d[0] - radius > camera.width as f32
        || mean2d[1] + radius < 0.0
        || mean2d[1] - radius > camera.height as f32
    {
        return None;
    }
    let center = camera.center();
    let v: [f32; 3] = std::array::from_fn(|i| input.position[i] - center[i]);
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let dir = [v[0] / n, v[1] / n, v[2] / n];
    let rgb = sh_color_free(&input.sh, dir);
    Some(Splat {
        mean2d,
        cov2d: [m00, m01, m11],
        conic,
        depth: z,
        rgb,
        opacity: input.opacity,
        radius,
        source,
    })
}

/// Projects a batch in parallel, keeping visible splats in input order.
/// `source` on each splat is the index into `inputs`.
pub fn project_gaussians(
    inputs: &[GaussianInput],
    camera: &Camera,
    alpha_cutoff: f32,
) -> Result<Vec<Splat>, RenderError> {
    camera.validate()?;
    if inputs.len() > u32::MAX as usize {
        return Err(RenderError::ShapeMismatch(format!(
            "batch of {} exceeds the splat index range",
            inputs.len()
        )));
    }
    for (i, g) in inputs.iter().enumerate() {
        let finite = g.position.iter().chain(&g.scale).chain(&g.rotation).chain(&g.sh).all(|v| v.is_finite())
            && g.opacity.is_finite();
        if !finite {
            return Err(RenderError::NonFinite(format!("gaussian {i}")));
        }
        if !(g.scale.iter().all(|&s| s > 0.0) && g.opacity >= 0.0 && g.opacity < 1.0) {
            return Err(RenderError::ShapeMismatch(format!(
                "gaussian {i}: scales must be positive and opacity inside [0, 1)"
            )));
        }
    }
    let projected: Vec<Option<Splat>> = inputs
        .par_iter()
        .enumerate()
        .map(|(i, g)| project_gaussian(g, camera, alpha_cutoff, i as u32))
        .collect();
    Ok(projected.into_iter().flatten().collect())
}

/// Backward pass of [`project_gaussian`] given gradients with respect
/// to the splat's screen-space quantities. Depth ordering and the
/// footprint radius are treated as non-differentiable.
pub fn project_backward(
    input: &GaussianInput,
    camera: &Camera,
    splat: &Splat,
    grad_mean2d: [f32; 2],
    grad_conic: [f32; 3],
    grad_rgb: [f32; 3],
    grad_opacity: f32,
) -> ProjectedGrads {
    let (_, a, p_cam) = screen_cov(input, camera);
    let [x, y, z] = p_cam;
    let (fx, fy) = (camera.fx, camera.fy);
    let w = &camera.rotation;

    // Conic -> 2D covariance: with q the conic matrix and f the
    // symmetrized conic gradient, dL/dm = -q f q.
    let (q00, q01, q11) = (splat.conic[0], splat.conic[1], splat.conic[2]);
    let (f00, f01, f11) = (grad_conic[0], 0.5 * grad_conic[1], grad_conic[2]);
    let t00 = f00 * q00 + f01 * q01;
    let t01 = f00 * q01 + f01 * q11;
    let t10 = f01 * q00 + f11 * q01;
    let t11 = f01 * q01 + f11 * q11;
    let gm00 = -(q00 * t00 + q01 * t10);
    let gm11 = -(q01 * t01 + q11 * t11);
    let gm01 = -0.5 * ((q00 * t01 + q01 * t11) + (q01 * t00 + q11 * t10));

    // m = a^T sigma a: dL/dsigma = a gm a^T, dL/da = 2 sigma a gm.
    let sigma = build_covariance(input.scale, input.rotation);
    let mut grad_sigma = [[0.0f32; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            grad_sigma[i][j] = a[i][0] * (gm00 * a[j][0] + gm01 * a[j][1])
                + a[i][1] * (gm01 * a[j][0] + gm11 * a[j][1]);
        }
    }
    let (grad_scale, grad_rotation) = covariance_backward(input.scale, input.rotation, grad_sigma);

    let mut grad_a = [[0.0f32; 2]; 3];
    for i in 0..3 {
        let am0 = a[i][0] * gm00 + a[i][1] * gm01;
        let am1 = a[i][0] * gm01 + a[i][1] * gm11;
        for k in 0..3 {
            grad_a[k][0] += 2.0 * sigma[k][i] * am0;
            grad_a[k][1] += 2.0 * sigma[k][i] * am1;
        }
    }
    // a[c][r] = J[r][.] W[.][c]: push onto the Jacobian entries.
    let mut gj = [[0.0f32; 3]; 2];
    for c in 0..3 {
        gj[0][0] += grad_a[c][0] * w[0][c];
        gj[0][2] += grad_a[c][0] * w[2][c];
        gj[1][1] += grad_a[c][1] * w[1][c];
        gj[1][2] += grad_a[c][1] * w[2][c];
    }
    let z2 = z * z;
    let mut g_cam = [0.0f32; 3];
    g_cam[0] = gj[0][2] * (-fx / z2);
    g_cam[1] = gj[1][2] * (-fy / z2);
    g_cam[2] = gj[0][0] * (-fx / z2)
        + gj[0][2] * (2.0 * fx * x / (z2 * z))
        + gj[1][1] * (-fy / z2)
        + gj[1][2] * (2.0 * fy * y / (z2 * z));

    // Screen-center chain: u = fx x / z + cx, v = fy y / z + cy.
    g_cam[0] += grad_mean2d[0] * fx / z;
    g_cam[1] += grad_mean2d[1] * fy / z;
    g_cam[2] += -grad_mean2d[0] * fx * x / z2 - grad_mean2d[1] * fy * y / z2;

    let mut grad_position = [0.0f32; 3];
    for i in 0..3 {
        grad_position[i] = w[0][i] * g_cam[0] + w[1][i] * g_cam[1] + w[2][i] * g_cam[2];
    }

    // View-direction chain for the color.
    let center = camera.center();
    let v: [f32; 3] = std::array::from_fn(|i| input.position[i] - center[i]);
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let dir = [v[0] / n, v[1] / n, v[2] / n];
    let (grad_sh, grad_dir) = sh_color_backward(&input.sh, dir, grad_rgb);
    let dot = dir[0] * grad_dir[0] + dir[1] * grad_dir[1] + dir[2] * grad_dir[2];
    for i in 0..3 {
        grad_position[i] += (grad_dir[i] - dir[i] * dot) / n;
    }

    ProjectedGrads {
        position: grad_position,
        scale: grad_scale,
        rotation: grad_rotation,
        sh: grad_sh,
        opacity: grad_opacity,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fgs_core::math::{quat_normalize, quat_normalize_backward, rel_err};
    use fgs_core::sh::{SH_C0, SH_C1, SH_C2, SH_C3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn test_camera() -> Camera {
        Camera::look_at([0.5, -0.4, -3.2], [0.0, 0.0, 0.0], [0.0, 1.0, 0.0], 140.0, 150.0, 64, 48)
            .unwrap()
    }

    fn random_input(rng: &mut ChaCha8Rng) -> GaussianInput {
        let mut sh = [0.0f32; SH_COEFFS];
        for v in sh.iter_mut() {
            *v = rng.gen_range(-0.04..0.04);
        }
        GaussianInput {
            position: std::array::from_fn(|_| rng.gen_range(-0.4f32..0.4)),
            scale: std::array::from_fn(|_| rng.gen_range(0.15f32..0.5)),
            rotation: quat_normalize(std::array::from_fn(|_| rng.gen_range(-1.0f32..1.0))),
            sh,
            opacity: rng.gen_range(0.3f32..0.9),
        }
    }

    /// Full projection recomputed in f64: returns (mean2d, conic, rgb,
    /// opacity) for a raw (unnormalized) quaternion.
    fn project_f64(
        cam: &Camera,
        pos: [f64; 3],
        scale: [f64; 3],
        raw_q: [f64; 4],
        sh: &[f64; SH_COEFFS],
        op: f64,
    ) -> ([f64; 2], [f64; 3], [f64; 3], f64) {
        let w: [[f64; 3]; 3] =
            std::array::from_fn(|i| std::array::from_fn(|j| f64::from(cam.rotation[i][j])));
        let t: [f64; 3] = cam.translation.map(f64::from);
        let p: [f64; 3] =
            std::array::from_fn(|i| w[i][0] * pos[0] + w[i][1] * pos[1] + w[i][2] * pos[2] + t[i]);
        let (fx, fy) = (f64::from(cam.fx), f64::from(cam.fy));
        let [x, y, z] = p;
        let j00 = fx / z;
        let j02 = -fx * x / (z * z);
        let j11 = fy / z;
        let j12 = -fy * y / (z * z);
        let mut a = [[0.0f64; 2]; 3];
        for c in 0..3 {
            a[c][0] = j00 * w[0][c] + j02 * w[2][c];
            a[c][1] = j11 * w[1][c] + j12 * w[2][c];
        }
        let qn = raw_q.iter().map(|v| v * v).sum::<f64>().sqrt();
        let [qw, qx, qy, qz] = raw_q.map(|v| v / qn);
        let r = [
            [
                1.0 - 2.0 * (qy * qy + qz * qz),
                2.0 * (qx * qy - qw * qz),
                2.0 * (qx * qz + qw * qy),
            ],
            [
                2.0 * (qx * qy + qw * qz),
                1.0 - 2.0 * (qx * qx + qz * qz),
                2.0 * (qy * qz - qw * qx),
            ],
            [
                2.0 * (qx * qz - qw * qy),
                2.0 * (qy * qz + qw * qx),
                1.0 - 2.0 * (qx * qx + qy * qy),
            ],
        ];
        let mut sigma = [[0.0f64; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    sigma[i][j] += r[i][k] * scale[k] * r[j][k] * scale[k];
                }
            }
        }
        let mut m = [[f64::from(COV2D_BLUR), 0.0], [0.0, f64::from(COV2D_BLUR)]];
        for r0 in 0..2 {
            for r1 in 0..2 {
                for i in 0..3 {
                    for j in 0..3 {
                        m[r0][r1] += a[i][r0] * sigma[i][j] * a[j][r1];
                    }
                }
            }
        }
        let det = m[0][0] * m[1][1] - m[0][1] * m[0][1];
        let conic = [m[1][1] / det, -m[0][1] / det, m[0][0] / det];
        let mean = [fx * x / z + f64::from(cam.cx), fy * y / z + f64::from(cam.cy)];
        let c32 = cam.center();
        let v: [f64; 3] = std::array::from_fn(|i| pos[i] - f64::from(c32[i]));
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let [dx, dy, dz] = v.map(|c| c / n);
        let (xx, yy, zz) = (dx * dx, dy * dy, dz * dz);
        let basis = [
            f64::from(SH_C0),
            -f64::from(SH_C1) * dy,
            f64::from(SH_C1) * dz,
            -f64::from(SH_C1) * dx,
            f64::from(SH_C2[0]) * dx * dy,
            f64::from(SH_C2[1]) * dy * dz,
            f64::from(SH_C2[2]) * (2.0 * zz - xx - yy),
            f64::from(SH_C2[3]) * dx * dz,
            f64::from(SH_C2[4]) * (xx - yy),
            f64::from(SH_C3[0]) * dy * (3.0 * xx - yy),
            f64::from(SH_C3[1]) * dx * dy * dz,
            f64::from(SH_C3[2]) * dy * (4.0 * zz - xx - yy),
            f64::from(SH_C3[3]) * dz * (2.0 * zz - 3.0 * xx - 3.0 * yy),
            f64::from(SH_C3[4]) * dx * (4.0 * zz - xx - yy),
            f64::from(SH_C3[5]) * dz * (xx - yy),
            f64::from(SH_C3[6]) * dx * (xx - 3.0 * yy),
        ];
        let mut rgb = [0.5f64; 3];
        for ch in 0..3 {
            for (k, b) in basis.iter().enumerate() {
                rgb[ch] += sh[k * 3 + ch] * b;
            }
            assert!(
                rgb[ch] > 0.005 && rgb[ch] < 0.995,
                "test fixture clamps a color channel ({})",
                rgb[ch]
            );
        }
        (mean, conic, rgb, op)
    }

    #[test]
    fn centered_gaussian_matches_pinhole_closed_form() {
        let cam =
            Camera::look_at([0.0, 0.0, -4.0], [0.0, 0.0, 0.0], [0.0, 1.0, 0.0], 120.0, 120.0, 64, 64)
                .unwrap();
        let g = GaussianInput {
            position: [0.0, 0.0, 0.0],
            scale: [0.2, 0.2, 0.2],
            rotation: [1.0, 0.0, 0.0, 0.0],
            sh: [0.0; SH_COEFFS],
            opacity: 0.8,
        };
        let s = project_gaussian(&g, &cam, 1.0 / 255.0, 7).unwrap();
        assert!((s.mean2d[0] - 32.0).abs() < 1e-3);
        assert!((s.mean2d[1] - 32.0).abs() < 1e-3);
        assert!((s.depth - 4.0).abs() < 1e-4);
        // Isotropic world scale s at depth z spans fx * s / z pixels.
        let expect = (120.0f32 * 0.2 / 4.0).powi(2) + COV2D_BLUR;
        assert!(rel_err(f64::from(s.cov2d[0]), f64::from(expect)) < 1e-4);
        assert!(rel_err(f64::from(s.cov2d[2]), f64::from(expect)) < 1e-4);
        assert!(s.cov2d[1].abs() < 1e-3);
        // Zero coefficients decode to mid gray.
        assert_eq!(s.rgb, [0.5, 0.5, 0.5]);
        assert_eq!(s.source, 7);
        assert_eq!(s.opacity, 0.8);
    }

    #[test]
    fn conic_inverts_the_screen_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let cam = test_camera();
        for _ in 0..10 {
            let g = random_input(&mut rng);
            let s = project_gaussian(&g, &cam, 1.0 / 255.0, 0).unwrap();
            let [m00, m01, m11] = s.cov2d.map(f64::from);
            let [a, b, c] = s.conic.map(f64::from);
            assert!((a * m00 + b * m01 - 1.0).abs() < 1e-4);
            assert!((a * m01 + b * m11).abs() < 1e-4);
            assert!((b * m01 + c * m11 - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn culling_rules() {
        let cam = test_camera();
        let mut g = GaussianInput {
            position: [0.0, 0.0, 0.0],
            scale: [0.2, 0.2, 0.2],
            rotation: [1.0, 0.0, 0.0, 0.0],
            sh: [0.0; SH_COEFFS],
            opacity: 0.8,
        };
        assert!(project_gaussian(&g, &cam, 1.0 / 255.0, 0).is_some());
        // Behind the camera.
        g.position = [0.5 * 2.0, -0.4 * 2.0, -3.2 * 2.0];
        assert!(project_gaussian(&g, &cam, 1.0 / 255.0, 0).is_none());
        // Opacity below the cutoff.
        g.position = [0.0, 0.0, 0.0];
        g.opacity = 1.0 / 512.0;
        assert!(project_gaussian(&g, &cam, 1.0 / 255.0, 0).is_none());
        // Far off the side of the image; culled with a finite footprint
        // but kept when the cutoff (and thus the footprint bound) is off.
        g.opacity = 0.8;
        g.position = [30.0, 0.0, 10.0];
        let on = project_gaussian(&g, &cam, 1.0 / 255.0, 0);
        if let Some(s) = &on {
            assert!(s.mean2d[0] - s.radius <= cam.width as f32);
        }
        assert!(project_gaussian(&g, &cam, 0.0, 0).is_some());
    }

    #[test]
    fn footprint_radius_bounds_the_cutoff_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let cam = test_camera();
        let cutoff = 1.0 / 255.0;
        for _ in 0..12 {
            let g = random_input(&mut rng);
            let s = project_gaussian(&g, &cam, cutoff, 0).unwrap();
            assert!(s.radius.is_finite() && s.radius >= 0.0);
            for _ in 0..32 {
                let phi = rng.gen_range(0.0f32..std::f32::consts::TAU);
                let d = s.radius * 1.01;
                let (dx, dy) = (d * phi.cos(), d * phi.sin());
                let q = s.conic[0] * dx * dx
                    + s.conic[2] * dy * dy
                    + 2.0 * s.conic[1] * dx * dy;
                let alpha = s.opacity * (-0.5 * q).exp();
                assert!(
                    alpha < cutoff,
                    "alpha {alpha} at 1.01x radius should sit below the cutoff {cutoff}"
                );
            }
        }
    }

    #[test]
    fn batch_projection_keeps_order_and_validates() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let cam = test_camera();
        let mut inputs: Vec<GaussianInput> = (0..20).map(|_| random_input(&mut rng)).collect();
        // Make one input invisible so an index gap appears.
        inputs[5].opacity = 1e-6;
        let splats = project_gaussians(&inputs, &cam, 1.0 / 255.0).unwrap();
        assert_eq!(splats.len(), 19);
        let sources: Vec<u32> = splats.iter().map(|s| s.source).collect();
        let mut expect: Vec<u32> = (0..20).filter(|&i| i != 5).collect();
        expect.sort_unstable();
        assert_eq!(sources, expect);

        let mut bad = inputs.clone();
        bad[3].position[1] = f32::NAN;
        assert!(matches!(
            project_gaussians(&bad, &cam, 1.0 / 255.0),
            Err(RenderError::NonFinite(_))
        ));
        let mut bad = inputs.clone();
        bad[2].opacity = 1.0;
        assert!(project_gaussians(&bad, &cam, 1.0 / 255.0).is_err());
        let mut bad = inputs;
        bad[1].scale[0] = 0.0;
        assert!(project_gaussians(&bad, &cam, 1.0 / 255.0).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let cam = test_camera();
        for case in 0..4 {
            let raw: [f32; 4] = std::array::from_fn(|_| rng.gen_range(-1.0f32..1.0));
            let mut g = random_input(&mut rng);
            g.rotation = quat_normalize(raw);
            let w_mean: [f32; 2] = std::array::from_fn(|_| rng.gen_range(-1.0f32..1.0));
            let w_conic: [f32; 3] = std::array::from_fn(|_| rng.gen_range(-1.0f32..1.0));
            let w_rgb: [f32; 3] = std::array::from_fn(|_| rng.gen_range(-1.0f32..1.0));
            let w_op: f32 = rng.gen_range(-1.0f32..1.0);

            let splat = project_gaussian(&g, &cam, 0.0, 0).unwrap();
            let grads = project_backward(&g, &cam, &splat, w_mean, w_conic, w_rgb, w_op);
            let grad_raw = quat_normalize_backward(raw, grads.rotation);

            let sh64: [f64; SH_COEFFS] = std::array::from_fn(|i| f64::from(g.sh[i]));
            let loss = |pos: [f64; 3], scale: [f64; 3], q: [f64; 4], sh: &[f64; SH_COEFFS], op: f64| {
                let (mean, conic, rgb, op) = project_f64(&cam, pos, scale, q, sh, op);
                let mut acc = 0.0;
                for c in 0..2 {
                    acc += f64::from(w_mean[c]) * mean[c];
                }
                for c in 0..3 {
                    acc += f64::from(w_conic[c]) * conic[c] + f64::from(w_rgb[c]) * rgb[c];
                }
                acc + f64::from(w_op) * op
            };
            let p64 = g.position.map(f64::from);
            let s64 = g.scale.map(f64::from);
            let q64 = raw.map(f64::from);
            let o64 = f64::from(g.opacity);
            let h = 1e-5;

            // Forward agreement between the f32 path and the reference.
            let (mean_ref, conic_ref, rgb_ref, _) = project_f64(&cam, p64, s64, q64, &sh64, o64);
            for c in 0..2 {
                assert!(rel_err(f64::from(splat.mean2d[c]), mean_ref[c]) < 1e-4);
            }
            for c in 0..3 {
                assert!(rel_err(f64::from(splat.conic[c]), conic_ref[c]) < 1e-4);
                assert!(rel_err(f64::from(splat.rgb[c]), rgb_ref[c]) < 1e-4);
            }

            let check = |name: &str, analytic: f32, fd: f64| {
                assert!(
                    rel_err(f64::from(analytic), fd) < 1e-4,
                    "case {case} {name}: analytic {analytic} vs fd {fd}"
                );
            };
            for c in 0..3 {
                let (mut hi, mut lo) = (p64, p64);
                hi[c] += h;
                lo[c] -= h;
                let fd = (loss(hi, s64, q64, &sh64, o64) - loss(lo, s64, q64, &sh64, o64)) / (2.0 * h);
                check(&format!("position[{c}]"), grads.position[c], fd);
            }
            for c in 0..3 {
                let (mut hi, mut lo) = (s64, s64);
                hi[c] += h;
                lo[c] -= h;
                let fd = (loss(p64, hi, q64, &sh64, o64) - loss(p64, lo, q64, &sh64, o64)) / (2.0 * h);
                check(&format!("scale[{c}]"), grads.scale[c], fd);
            }
            for c in 0..4 {
                let (mut hi, mut lo) = (q64, q64);
                hi[c] += h;
                lo[c] -= h;
                let fd = (loss(p64, s64, hi, &sh64, o64) - loss(p64, s64, lo, &sh64, o64)) / (2.0 * h);
                check(&format!("rotation[{c}]"), grad_raw[c], fd);
            }
            for idx in 0..SH_COEFFS {
                let (mut hi, mut lo) = (sh64, sh64);
                hi[idx] += h;
                lo[idx] -= h;
                let fd = (loss(p64, s64, q64, &hi, o64) - loss(p64, s64, q64, &lo, o64)) / (2.0 * h);
                check(&format!("sh[{idx}]"), grads.sh[idx], fd);
            }
            let fd = (loss(p64, s64, q64, &sh64, o64 + h) - loss(p64, s64, q64, &sh64, o64 - h))
                / (2.0 * h);
            check("opacity", grads.opacity, fd);
        }
    }
}
