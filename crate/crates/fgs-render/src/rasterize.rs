//! Tiled alpha-blending rasterizer for projected splats.
//!
//! Splats are depth-sorted once globally, binned into fixed-size screen
//! tiles by their footprint radius, and composited front to back per
//! pixel: `C = sum_i rgb_i * alpha_i * T_i + T_final * background` with
//! `T_i` the transmittance before splat `i`. A pair is skipped when its
//! alpha falls below the cutoff, and blending stops early once
//! transmittance would sink below the floor. Because the footprint
//! radius already bounds where alpha can reach the cutoff, the tiled
//! result is bit-for-bit identical to looping every splat over every
//! pixel.

use rayon::prelude::*;

use crate::error::RenderError;
use crate::project::Splat;

/// Rasterization controls. Halving either cutoff to zero (or below)
/// disables the corresponding shortcut, which gradient checks use to
/// keep the forward pass smooth.
#[derive(Debug, Clone)]
pub struct RasterizeOptions {
    /// Edge length of a screen tile in pixels.
    pub tile_size: usize,
    /// Pairs with `alpha < alpha_cutoff` are skipped. Must match the
    /// cutoff used at projection time for the tiling to be exact.
    pub alpha_cutoff: f32,
    /// Blending stops before a splat would push transmittance below
    /// this floor.
    pub transmittance_floor: f32,
}

impl Default for RasterizeOptions {
    fn default() -> Self {
        Self { tile_size: 16, alpha_cutoff: 1.0 / 255.0, transmittance_floor: 1e-4 }
    }
}

/// A rendered frame: row-major `height x width x 3` color and the
/// per-pixel transmittance left after blending.
#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub width: usize,
    pub height: usize,
    pub image: Vec<f32>,
    pub transmittance: Vec<f32>,
}

/// Gradients with respect to the screen-space splat parameters, index-
/// aligned with the (sorted) splat slice handed to the backward pass.
#[derive(Debug, Clone)]
pub struct SplatGrads {
    pub mean2d: Vec<[f32; 2]>,
    pub conic: Vec<[f32; 3]>,
    pub rgb: Vec<[f32; 3]>,
    pub opacity: Vec<f32>,
}

/// Stable ascending depth sort. Equal depths keep their relative order;
/// a NaN depth is an error.
pub fn sort_by_depth(splats: &mut [Splat]) -> Result<(), RenderError> {
    if let Some(i) = splats.iter().position(|s| s.depth.is_nan()) {
        return Err(RenderError::NonFinite(format!("splat {i} has NaN depth")));
    }
    splats.sort_by(|a, b| a.depth.total_cmp(&b.depth));
    Ok(())
}

/// Inclusive tile ranges covered by a splat's footprint, `None` when
/// the footprint misses the image. The one-pixel margin absorbs the
/// half-pixel center offset.
fn tile_cover(
    splat: &Splat,
    width: usize,
    height: usize,
    tile: usize,
) -> Option<(usize, usize, usize, usize)> {
    let (x_lo, x_hi) = (splat.mean2d[0] - splat.radius - 1.0, splat.mean2d[0] + splat.radius + 1.0);
    let (y_lo, y_hi) = (splat.mean2d[1] - splat.radius - 1.0, splat.mean2d[1] + splat.radius + 1.0);
    if x_hi < 0.0 || y_hi < 0.0 || x_lo >= width as f32 || y_lo >= height as f32 {
        return None;
    }
    let clamp_tile = |v: f32, tiles: usize| -> usize {
        ((v / tile as f32).floor() as i64).clamp(0, tiles as i64 - 1) as usize
    };
    let tiles_x = width.div_ceil(tile);
    let tiles_y = height.div_ceil(tile);
    Some((
        clamp_tile(x_lo, tiles_x),
        clamp_tile(x_hi, tiles_x),
        clamp_tile(y_lo, tiles_y),
        clamp_tile(y_hi, tiles_y),
    ))
}

fn bin_splats(splats: &[Splat], width: usize, height: usize, tile: usize) -> Vec<Vec<u32>> {
    let tiles_x = width.div_ceil(tile);
    let tiles_y = height.div_ceil(tile);
    let mut bins = vec![Vec::new(); tiles_x * tiles_y];
    for (idx, splat) in splats.iter().enumerate() {
        if let Some((tx0, tx1, ty0, ty1)) = tile_cover(splat, width, height, tile) {
            for ty in ty0..=ty1 {
                for tx in tx0..=tx1 {
                    bins[ty * tiles_x + tx].push(idx as u32);
                }
            }
        }
    }
    bins
}

fn validate_frame(
    width: usize,
    height: usize,
    background: [f32; 3],
    options: &RasterizeOptions,
) -> Result<(), RenderError> {
    if width == 0 || height == 0 {
        return Err(RenderError::ShapeMismatch("empty render target".into()));
    }
    if options.tile_size == 0 {
        return Err(RenderError::ShapeMismatch("tile size must be at least 1".into()));
    }
    if !background.iter().all(|v| v.is_finite()) {
        return Err(RenderError::NonFinite("background color".into()));
    }
    Ok(())
}

/// Renders depth-sorted splats over a constant background. The slice is
/// sorted in place; pass it in the same order to the backward pass.
pub fn rasterize(
    splats: &mut [Splat],
    width: usize,
    height: usize,
    background: [f32; 3],
    options: &RasterizeOptions,
) -> Result<RenderOutput, RenderError> {
    validate_frame(width, height, background, options)?;
    sort_by_depth(splats)?;
    let tile = options.tile_size;
    let bins = bin_splats(splats, width, height, tile);
    let tiles_x = width.div_ceil(tile);

    let mut image = vec![0.0f32; width * height * 3];
    let mut transmittance = vec![0.0f32; width * height];
    // Each tile row of pixels is an independent band of both outputs.
    image
        .par_chunks_mut(tile * width * 3)
        .zip(transmittance.par_chunks_mut(tile * width))
        .enumerate()
        .for_each(|(band, (img, trans))| {
            let y0 = band * tile;
            let y1 = (y0 + tile).min(height);
            for tx in 0..tiles_x {
                let bin = &bins[band * tiles_x + tx];
                let x0 = tx * tile;
                let x1 = (x0 + tile).min(width);
                for py in y0..y1 {
                    for px in x0..x1 {
                        let mut t = 1.0f32;
                        let mut acc = [0.0f32; 3];
                        for &si in bin {
                            let s = &splats[si as usize];
                            let dx = (px as f32 + 0.5) - s.mean2d[0];
                            let dy = (py as f32 + 0.5) - s.mean2d[1];
                            let q = s.conic[0] * dx * dx
                                + s.conic[2] * dy * dy
                                + 2.0 * s.conic[1] * dx * dy;
                            if q < 0.0 {
                                continue;
                            }
                            let alpha = s.opacity * (-0.5 * q).exp();
                            if alpha < options.alpha_cutoff {
                                continue;
                            }
                            let t_new = t * (1.0 - alpha);
                            if t_new < options.transmittance_floor {
                                break;
                            }
                            acc[0] += s.rgb[0] * alpha * t;
                            acc[1] += s.rgb[1] * alpha * t;
                            acc[2] += s.rgb[2] * alpha * t;
                            t = t_new;
                        }
                        let o = ((py - y0) * width + px) * 3;
                        img[o] = acc[0] + t * background[0];
                        img[o + 1] = acc[1] + t * background[1];
                        img[o + 2] = acc[2] + t * background[2];
                        trans[(py - y0) * width + px] = t;
                    }
                }
            }
        });
    Ok(RenderOutput { width, height, image, transmittance })
}

struct TilePartial {
    mean2d: Vec<[f32; 2]>,
    conic: Vec<[f32; 3]>,
    rgb: Vec<[f32; 3]>,
    opacity: Vec<f32>,
}

/// Backward pass of [`rasterize`] for a loss gradient over the image.
/// `splats` must be exactly as the forward pass left them (sorted);
/// returned gradients are index-aligned with that slice.
pub fn rasterize_backward(
    splats: &[Splat],
    width: usize,
    height: usize,
    background: [f32; 3],
    options: &RasterizeOptions,
    grad_image: &[f32],
) -> Result<SplatGrads, RenderError> {
    validate_frame(width, height, background, options)?;
    if grad_image.len() != width * height * 3 {
        return Err(RenderError::ShapeMismatch(format!(
            "gradient image has {} values, expected {}",
            grad_image.len(),
            width * height * 3
        )));
    }
    if !grad_image.iter().all(|v| v.is_finite()) {
        return Err(RenderError::NonFinite("gradient image".into()));
    }
    if splats.windows(2).any(|w| !(w[0].depth <= w[1].depth)) {
        return Err(RenderError::ShapeMismatch(
            "splats must be depth-sorted by the forward pass".into(),
        ));
    }
    let tile = options.tile_size;
    let bins = bin_splats(splats, width, height, tile);
    let tiles_x = width.div_ceil(tile);

    let partials: Vec<TilePartial> = (0..bins.len())
        .into_par_iter()
        .map(|tidx| {
            let bin = &bins[tidx];
            let mut part = TilePartial {
                mean2d: vec![[0.0; 2]; bin.len()],
                conic: vec![[0.0; 3]; bin.len()],
                rgb: vec![[0.0; 3]; bin.len()],
                opacity: vec![0.0; bin.len()],
            };
            let (ty, tx) = (tidx / tiles_x, tidx % tiles_x);
            let x0 = tx * tile;
            let x1 = (x0 + tile).min(width);
            let y0 = ty * tile;
            let y1 = (y0 + tile).min(height);
            // Contributing blends of one pixel: (bin slot, exp(-q/2),
            // alpha, transmittance before the blend).
            let mut stack: Vec<(usize, f32, f32, f32)> = Vec::new();
            for py in y0..y1 {
                for px in x0..x1 {
                    stack.clear();
                    let mut t = 1.0f32;
                    for (slot, &si) in bin.iter().enumerate() {
                        let s = &splats[si as usize];
                        let dx = (px as f32 + 0.5) - s.mean2d[0];
                        let dy = (py as f32 + 0.5) - s.mean2d[1];
                        let q = s.conic[0] * dx * dx
                            + s.conic[2] * dy * dy
                            + 2.0 * s.conic[1] * dx * dy;
                        if q < 0.0 {
                            continue;
                        }
                        let e = (-0.5 * q).exp();
                        let alpha = s.opacity * e;
                        if alpha < options.alpha_cutoff {
                            continue;
                        }
                        let t_new = t * (1.0 - alpha);
                        if t_new < options.transmittance_floor {
                            break;
                        }
                        stack.push((slot, e, alpha, t));
                        t = t_new;
                    }
                    let g = &grad_image[((py * width) + px) * 3..((py * width) + px) * 3 + 3];
                    // Suffix color: everything blended behind the splat
                    // being differentiated, background included.
                    let mut suffix = [t * background[0], t * background[1], t * background[2]];
                    for &(slot, e, alpha, t_before) in stack.iter().rev() {
                        let s = &splats[bin[slot] as usize];
                        let dx = (px as f32 + 0.5) - s.mean2d[0];
                        let dy = (py as f32 + 0.5) - s.mean2d[1];
                        let mut g_alpha = 0.0f32;
                        for c in 0..3 {
                            part.rgb[slot][c] += g[c] * alpha * t_before;
                            g_alpha += g[c] * (s.rgb[c] * t_before - suffix[c] / (1.0 - alpha));
                            suffix[c] += s.rgb[c] * alpha * t_before;
                        }
                        part.opacity[slot] += g_alpha * e;
                        let g_q = g_alpha * (-0.5 * alpha);
                        part.conic[slot][0] += g_q * dx * dx;
                        part.conic[slot][1] += g_q * 2.0 * dx * dy;
                        part.conic[slot][2] += g_q * dy * dy;
                        part.mean2d[slot][0] -= g_q * (2.0 * s.conic[0] * dx + 2.0 * s.conic[1] * dy);
                        part.mean2d[slot][1] -= g_q * (2.0 * s.conic[2] * dy + 2.0 * s.conic[1] * dx);
                    }
                }
            }
            part
        })
        .collect();

    let mut grads = SplatGrads {
        mean2d: vec![[0.0; 2]; splats.len()],
        conic: vec![[0.0; 3]; splats.len()],
        rgb: vec![[0.0; 3]; splats.len()],
        opacity: vec![0.0; splats.len()],
    };
    // Fixed tile order keeps the floating-point reduction reproducible.
    for (bin, part) in bins.iter().zip(&partials) {
        for (slot, &si) in bin.iter().enumerate() {
            let i = si as usize;
            for c in 0..2 {
                grads.mean2d[i][c] += part.mean2d[slot][c];
            }
            for c in 0..3 {
                grads.conic[i][c] += part.conic[slot][c];
                grads.rgb[i][c] += part.rgb[slot][c];
            }
            grads.opacity[i] += part.opacity[slot];
        }
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::Camera;
    use crate::project::{project_gaussians, GaussianInput};
    use fgs_core::math::{quat_normalize, rel_err};
    use fgs_core::sh::SH_COEFFS;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn test_camera(width: usize, height: usize) -> Camera {
        Camera::look_at(
            [0.3, -0.2, -3.0],
            [0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            0.9 * width as f32,
            0.9 * width as f32,
            width,
            height,
        )
        .unwrap()
    }

    fn random_scene(rng: &mut ChaCha8Rng, count: usize) -> Vec<GaussianInput> {
        (0..count)
            .map(|_| {
                let mut sh = [0.0f32; SH_COEFFS];
                for v in sh.iter_mut() {
                    *v = rng.gen_range(-0.3..0.3);
                }
                GaussianInput {
                    position: std::array::from_fn(|_| rng.gen_range(-0.6f32..0.6)),
                    scale: std::array::from_fn(|_| rng.gen_range(0.02f32..0.2)),
                    rotation: quat_normalize(std::array::from_fn(|_| rng.gen_range(-1.0f32..1.0))),
                    sh,
                    opacity: rng.gen_range(0.05f32..0.95),
                }
            })
            .collect()
    }

    /// Brute force: every splat against every pixel, same arithmetic.
    fn naive_rasterize(
        splats: &[Splat],
        width: usize,
        height: usize,
        background: [f32; 3],
        options: &RasterizeOptions,
    ) -> (Vec<f32>, Vec<f32>) {
        let mut image = vec![0.0f32; width * height * 3];
        let mut transmittance = vec![0.0f32; width * height];
        for py in 0..height {
            for px in 0..width {
                let mut t = 1.0f32;
                let mut acc = [0.0f32; 3];
                for s in splats {
                    let dx = (px as f32 + 0.5) - s.mean2d[0];
                    let dy = (py as f32 + 0.5) - s.mean2d[1];
                    let q = s.conic[0] * dx * dx
                        + s.conic[2] * dy * dy
                        + 2.0 * s.conic[1] * dx * dy;
                    if q < 0.0 {
                        continue;
                    }
                    let alpha = s.opacity * (-0.5 * q).exp();
                    if alpha < options.alpha_cutoff {
                        continue;
                    }
                    let t_new = t * (1.0 - alpha);
                    if t_new < options.transmittance_floor {
                        break;
                    }
                    acc[0] += s.rgb[0] * alpha * t;
                    acc[1] += s.rgb[1] * alpha * t;
                    acc[2] += s.rgb[2] * alpha * t;
                    t = t_new;
                }
                let o = (py * width + px) * 3;
                image[o] = acc[0] + t * background[0];
                image[o + 1] = acc[1] + t * background[1];
                image[o + 2] = acc[2] + t * background[2];
                transmittance[py * width + px] = t;
            }
        }
        (image, transmittance)
    }

    fn assert_bitwise_eq(a: &[f32], b: &[f32]) {
        assert_eq!(a.len(), b.len());
        for (i, (x, y)) in a.iter().zip(b).enumerate() {
            assert_eq!(x.to_bits(), y.to_bits(), "index {i}: {x} vs {y}");
        }
    }

    #[test]
    fn tiled_matches_brute_force_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for (width, height, tile, cutoff) in
            [(67usize, 45usize, 16usize, 1.0f32 / 255.0), (64, 64, 8, 1.0 / 255.0), (33, 50, 32, 0.05)]
        {
            let cam = test_camera(width, height);
            let scene = random_scene(&mut rng, 120);
            let mut splats = project_gaussians(&scene, &cam, cutoff).unwrap();
            assert!(splats.len() > 60, "scene should mostly survive culling");
            let options = RasterizeOptions { tile_size: tile, alpha_cutoff: cutoff, ..Default::default() };
            let out = rasterize(&mut splats, width, height, [0.2, 0.4, 0.9], &options).unwrap();
            let (image, trans) = naive_rasterize(&splats, width, height, [0.2, 0.4, 0.9], &options);
            assert_bitwise_eq(&out.image, &image);
            assert_bitwise_eq(&out.transmittance, &trans);
        }
    }

    #[test]
    fn tiled_matches_brute_force_with_cutoffs_disabled() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let (width, height) = (40usize, 28usize);
        let cam = test_camera(width, height);
        let scene = random_scene(&mut rng, 40);
        let mut splats = project_gaussians(&scene, &cam, 0.0).unwrap();
        let options =
            RasterizeOptions { tile_size: 16, alpha_cutoff: 0.0, transmittance_floor: 0.0 };
        let out = rasterize(&mut splats, width, height, [1.0, 1.0, 1.0], &options).unwrap();
        let (image, trans) = naive_rasterize(&splats, width, height, [1.0, 1.0, 1.0], &options);
        assert_bitwise_eq(&out.image, &image);
        assert_bitwise_eq(&out.transmittance, &trans);
    }

    fn plain_splat(depth: f32, rgb: [f32; 3], opacity: f32, source: u32) -> Splat {
        Splat {
            mean2d: [8.5, 8.5],
            cov2d: [4.0, 0.0, 4.0],
            conic: [0.25, 0.0, 0.25],
            depth,
            rgb,
            opacity,
            radius: 30.0,
            source,
        }
    }

    #[test]
    fn two_splats_match_the_closed_form() {
        let (a, b) = (0.7f32, 0.4f32);
        let (ca, cb) = ([0.9f32, 0.1, 0.3], [0.2f32, 0.8, 0.5]);
        let bg = [0.25f32, 0.5, 0.75];
        let mut splats = vec![plain_splat(2.0, cb, b, 1), plain_splat(1.0, ca, a, 0)];
        let out = rasterize(&mut splats, 17, 17, bg, &RasterizeOptions::default()).unwrap();
        // Dead-center pixel (8, 8) has q = 0 for both splats.
        let o = ((8 * 17) + 8) * 3;
        for c in 0..3 {
            let expect = f64::from(ca[c]) * f64::from(a)
                + f64::from(cb[c]) * f64::from(b) * (1.0 - f64::from(a))
                + f64::from(bg[c]) * (1.0 - f64::from(a)) * (1.0 - f64::from(b));
            assert!(
                (f64::from(out.image[o + c]) - expect).abs() < 1e-6,
                "channel {c}: {} vs {expect}",
                out.image[o + c]
            );
        }
        let t = out.transmittance[8 * 17 + 8];
        assert!((f64::from(t) - (1.0 - 0.7) * (1.0 - 0.4)).abs() < 1e-6);
    }

    #[test]
    fn unit_colors_over_white_stay_white() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let (width, height) = (48usize, 36usize);
        let cam = test_camera(width, height);
        let scene = random_scene(&mut rng, 60);
        let mut splats = project_gaussians(&scene, &cam, 1.0 / 255.0).unwrap();
        for s in splats.iter_mut() {
            s.rgb = [1.0, 1.0, 1.0];
        }
        let out =
            rasterize(&mut splats, width, height, [1.0, 1.0, 1.0], &RasterizeOptions::default())
                .unwrap();
        for (i, v) in out.image.iter().enumerate() {
            assert!((v - 1.0).abs() < 1e-5, "pixel value {v} at {i}");
        }
    }

    #[test]
    fn input_order_does_not_matter() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let (width, height) = (32usize, 32usize);
        let cam = test_camera(width, height);
        let scene = random_scene(&mut rng, 50);
        let splats = project_gaussians(&scene, &cam, 1.0 / 255.0).unwrap();
        let mut a = splats.clone();
        let mut b = splats;
        b.shuffle(&mut rng);
        let out_a =
            rasterize(&mut a, width, height, [0.0, 0.0, 0.0], &RasterizeOptions::default()).unwrap();
        let out_b =
            rasterize(&mut b, width, height, [0.0, 0.0, 0.0], &RasterizeOptions::default()).unwrap();
        assert_bitwise_eq(&out_a.image, &out_b.image);
    }

    #[test]
    fn sort_is_stable_and_rejects_nan() {
        let mut splats = vec![
            plain_splat(3.0, [0.0; 3], 0.5, 0),
            plain_splat(1.0, [0.0; 3], 0.5, 1),
            plain_splat(2.0, [0.0; 3], 0.5, 2),
            plain_splat(1.0, [0.0; 3], 0.5, 3),
        ];
        sort_by_depth(&mut splats).unwrap();
        let order: Vec<u32> = splats.iter().map(|s| s.source).collect();
        assert_eq!(order, vec![1, 3, 2, 0]);
        splats[0].depth = f32::NAN;
        assert!(matches!(sort_by_depth(&mut splats), Err(RenderError::NonFinite(_))));
    }

    #[test]
    fn opaque_stack_terminates_early() {
        let mut splats = vec![
            plain_splat(1.0, [1.0, 0.0, 0.0], 0.999, 0),
            plain_splat(2.0, [0.0, 1.0, 0.0], 0.999, 1),
            plain_splat(3.0, [0.0, 0.0, 1.0], 0.999, 2),
        ];
        let bg = [0.0f32, 0.0, 1.0];
        let out = rasterize(&mut splats, 17, 17, bg, &RasterizeOptions::default()).unwrap();
        let o = ((8 * 17) + 8) * 3;
        let t1 = 1.0f32 - 0.999;
        // The second splat would push transmittance to 1e-6 < 1e-4, so
        // only the first one blends and the background shows through t1.
        assert_eq!(out.image[o], 0.999);
        assert_eq!(out.image[o + 1], 0.0);
        assert_eq!(out.image[o + 2], t1 * 1.0);
        assert_eq!(out.transmittance[8 * 17 + 8], t1);
    }

    #[test]
    fn backward_rejects_unsorted_and_bad_shapes() {
        let mut splats = vec![plain_splat(2.0, [0.5; 3], 0.5, 0), plain_splat(1.0, [0.5; 3], 0.5, 1)];
        let options = RasterizeOptions::default();
        let grad = vec![0.0f32; 17 * 17 * 3];
        assert!(rasterize_backward(&splats, 17, 17, [0.0; 3], &options, &grad).is_err());
        sort_by_depth(&mut splats).unwrap();
        assert!(rasterize_backward(&splats, 17, 17, [0.0; 3], &options, &grad[1..]).is_err());
        assert!(rasterize_backward(&splats, 17, 17, [0.0; 3], &options, &grad).is_ok());
    }

    /// f64 mirror of the forward pass for finite differencing.
    #[allow(clippy::too_many_arguments)]
    fn naive_f64(
        mean: &[[f64; 2]],
        conic: &[[f64; 3]],
        rgb: &[[f64; 3]],
        opacity: &[f64],
        width: usize,
        height: usize,
        background: [f64; 3],
    ) -> Vec<f64> {
        let mut image = vec![0.0f64; width * height * 3];
        for py in 0..height {
            for px in 0..width {
                let mut t = 1.0f64;
                let mut acc = [0.0f64; 3];
                for i in 0..mean.len() {
                    let dx = (px as f64 + 0.5) - mean[i][0];
                    let dy = (py as f64 + 0.5) - mean[i][1];
                    let q = conic[i][0] * dx * dx + conic[i][2] * dy * dy + 2.0 * conic[i][1] * dx * dy;
                    if q < 0.0 {
                        continue;
                    }
                    let alpha = opacity[i] * (-0.5 * q).exp();
                    for c in 0..3 {
                        acc[c] += rgb[i][c] * alpha * t;
                    }
                    t *= 1.0 - alpha;
                }
                let o = (py * width + px) * 3;
                for c in 0..3 {
                    image[o + c] = acc[c] + t * background[c];
                }
            }
        }
        image
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let (width, height) = (16usize, 16usize);
        let cam = test_camera(width, height);
        let scene = random_scene(&mut rng, 8);
        let mut splats = project_gaussians(&scene, &cam, 0.0).unwrap();
        assert!(splats.len() >= 6);
        let options = RasterizeOptions { tile_size: 8, alpha_cutoff: 0.0, transmittance_floor: 0.0 };
        let bg = [0.3f32, 0.6, 0.1];
        let out = rasterize(&mut splats, width, height, bg, &options).unwrap();
        let weights: Vec<f32> = (0..width * height * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let grads = rasterize_backward(&splats, width, height, bg, &options, &weights).unwrap();

        let mean: Vec<[f64; 2]> = splats.iter().map(|s| s.mean2d.map(f64::from)).collect();
        let conic: Vec<[f64; 3]> = splats.iter().map(|s| s.conic.map(f64::from)).collect();
        let rgb: Vec<[f64; 3]> = splats.iter().map(|s| s.rgb.map(f64::from)).collect();
        let opacity: Vec<f64> = splats.iter().map(|s| f64::from(s.opacity)).collect();
        let bg64 = bg.map(f64::from);
        let loss = |mean: &[[f64; 2]], conic: &[[f64; 3]], rgb: &[[f64; 3]], op: &[f64]| -> f64 {
            naive_f64(mean, conic, rgb, op, width, height, bg64)
                .iter()
                .zip(&weights)
                .map(|(v, w)| v * f64::from(*w))
                .sum()
        };
        // The f32 forward and the f64 mirror must agree closely.
        let ref_image = naive_f64(&mean, &conic, &rgb, &opacity, width, height, bg64);
        for (a, b) in out.image.iter().zip(&ref_image) {
            assert!((f64::from(*a) - b).abs() < 1e-4);
        }

        let h = 1e-5;
        for i in 0..splats.len() {
            for c in 0..2 {
                let mut hi = mean.clone();
                let mut lo = mean.clone();
                hi[i][c] += h;
                lo[i][c] -= h;
                let fd = (loss(&hi, &conic, &rgb, &opacity) - loss(&lo, &conic, &rgb, &opacity))
                    / (2.0 * h);
                assert!(
                    rel_err(f64::from(grads.mean2d[i][c]), fd) < 1e-3,
                    "splat {i} mean[{c}]: {} vs {fd}",
                    grads.mean2d[i][c]
                );
            }
            for c in 0..3 {
                let mut hi = conic.clone();
                let mut lo = conic.clone();
                hi[i][c] += h;
                lo[i][c] -= h;
                let fd = (loss(&mean, &hi, &rgb, &opacity) - loss(&mean, &lo, &rgb, &opacity))
                    / (2.0 * h);
                assert!(
                    rel_err(f64::from(grads.conic[i][c]), fd) < 1e-3,
                    "splat {i} conic[{c}]: {} vs {fd}",
                    grads.conic[i][c]
                );
                let mut hi = rgb.clone();
                let mut lo = rgb.clone();
                hi[i][c] += h;
                lo[i][c] -= h;
                let fd = (loss(&mean, &conic, &hi, &opacity) - loss(&mean, &conic, &lo, &opacity))
                    / (2.0 * h);
                assert!(
                    rel_err(f64::from(grads.rgb[i][c]), fd) < 1e-3,
                    "splat {i} rgb[{c}]: {} vs {fd}",
                    grads.rgb[i][c]
                );
            }
            let mut hi = opacity.clone();
            let mut lo = opacity.clone();
            hi[i] += h;
            lo[i] -= h;
            let fd =
                (loss(&mean, &conic, &rgb, &hi) - loss(&mean, &conic, &rgb, &lo)) / (2.0 * h);
            assert!(
                rel_err(f64::from(grads.opacity[i]), fd) < 1e-3,
                "splat {i} opacity: {} vs {fd}",
                grads.opacity[i]
            );
        }
    }
}
