//! Small synthetic scenes with known ground truth.
//!
//! A toy scene is a hand-sized cloud of explicit gaussians (a noisy
//! ring plus a central blob, colored by a smooth spatial field) together
//! with train and test views rendered from it by the regular renderer.
//! End-to-end tests fit a factorized model against the train views and
//! score it on the held-out ones.

use fgs_core::math::quat_normalize;
use fgs_core::sh::{SH_C0, SH_COEFFS};
use fgs_render::{project_gaussians, rasterize, Camera, GaussianInput, RenderOutput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::TrainError;
use crate::pipeline::RenderSettings;
use crate::trainer::TrainView;

/// Knobs for [`generate_toy_scene`].
#[derive(Debug, Clone)]
pub struct ToyConfig {
    pub gaussians: usize,
    pub train_views: usize,
    pub test_views: usize,
    pub width: usize,
    pub height: usize,
    /// Focal length in pixels for both axes.
    pub focal: f32,
    /// Distance of the camera ring from the origin.
    pub camera_radius: f32,
    pub seed: u64,
    pub settings: RenderSettings,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            gaussians: 200,
            train_views: 20,
            test_views: 5,
            width: 64,
            height: 64,
            focal: 70.0,
            camera_radius: 2.5,
            seed: 0,
            settings: RenderSettings::default(),
        }
    }
}

/// A generated scene: explicit gaussians plus rendered views.
#[derive(Debug, Clone)]
pub struct ToyScene {
    pub gaussians: Vec<GaussianInput>,
    pub train: Vec<TrainView>,
    pub test: Vec<TrainView>,
    pub settings: RenderSettings,
}

impl ToyScene {
    /// Scalars a direct, per-gaussian representation stores: position,
    /// extents, rotation, harmonics and opacity.
    pub fn dense_parameter_count(&self) -> u64 {
        self.gaussians.len() as u64 * (3 + 3 + 4 + SH_COEFFS as u64 + 1)
    }
}

/// Renders explicit gaussians for one camera, outside any model.
pub fn render_dense(
    gaussians: &[GaussianInput],
    camera: &Camera,
    settings: &RenderSettings,
) -> Result<RenderOutput, TrainError> {
    let mut splats = project_gaussians(gaussians, camera, settings.alpha_cutoff)?;
    Ok(rasterize(
        &mut splats,
        camera.width,
        camera.height,
        settings.background,
        &settings.raster_options(),
    )?)
}

/// Builds the gaussian cloud and renders every view.
pub fn generate_toy_scene(config: &ToyConfig) -> Result<ToyScene, TrainError> {
    if config.gaussians == 0 || config.train_views == 0 {
        return Err(TrainError::InvalidConfig(
            "toy scenes need gaussians and at least one train view".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut gaussians = Vec::with_capacity(config.gaussians);
    for idx in 0..config.gaussians {
        let position = if idx % 5 < 3 {
            // Noisy ring in the xz plane.
            let angle = rng.gen_range(0.0..std::f32::consts::TAU);
            let radius = 0.55 + rng.gen_range(-0.08..0.08);
            [
                radius * angle.cos(),
                rng.gen_range(-0.12..0.12),
                radius * angle.sin(),
            ]
        } else {
            // Central blob.
            [
                rng.gen_range(-0.28..0.28),
                rng.gen_range(-0.28..0.28),
                rng.gen_range(-0.28..0.28),
            ]
        };
        let mut sh = [0.0f32; SH_COEFFS];
        let rgb = color_field(position);
        for ch in 0..3 {
            sh[ch] = (rgb[ch] - 0.5) / SH_C0;
        }
        for v in sh.iter_mut().skip(3) {
            *v = rng.gen_range(-0.02..0.02);
        }
        let rotation = quat_normalize([
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ]);
        gaussians.push(GaussianInput {
            position,
            scale: [
                rng.gen_range(0.04..0.12),
                rng.gen_range(0.04..0.12),
                rng.gen_range(0.04..0.12),
            ],
            rotation,
            sh,
            opacity: rng.gen_range(0.55..0.95),
        });
    }

    let mut train = Vec::with_capacity(config.train_views);
    for idx in 0..config.train_views {
        let angle = idx as f32 * std::f32::consts::TAU / config.train_views as f32;
        let height = 0.9 * (idx as f32 * 2.4).sin();
        train.push(make_view(config, &gaussians, angle, height)?);
    }
    let mut test = Vec::with_capacity(config.test_views);
    for idx in 0..config.test_views {
        let angle = (idx as f32 + 0.5) * std::f32::consts::TAU / config.test_views.max(1) as f32;
        let height = if idx % 2 == 0 { 0.35 } else { -0.35 };
        test.push(make_view(config, &gaussians, angle, height)?);
    }

    Ok(ToyScene {
        gaussians,
        train,
        test,
        settings: config.settings,
    })
}

/// Smooth position-to-color mapping; keeps channels inside (0, 1).
fn color_field(p: [f32; 3]) -> [f32; 3] {
    [
        0.5 + 0.45 * (3.0 * p[0]).sin(),
        0.5 + 0.45 * (3.0 * p[1] + 1.0).sin(),
        0.5 + 0.45 * (3.0 * p[2] + 2.0).sin(),
    ]
}

fn make_view(
    config: &ToyConfig,
    gaussians: &[GaussianInput],
    angle: f32,
    height: f32,
) -> Result<TrainView, TrainError> {
    let r = config.camera_radius;
    let camera = Camera::look_at(
        [r * angle.sin(), height, -r * angle.cos()],
        [0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        config.focal,
        config.focal,
        config.width,
        config.height,
    )?;
    let output = render_dense(gaussians, &camera, &config.settings)?;
    Ok(TrainView {
        camera,
        image: output.image,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic_and_shaped() {
        let config = ToyConfig {
            gaussians: 50,
            train_views: 4,
            test_views: 2,
            width: 32,
            height: 32,
            ..ToyConfig::default()
        };
        let a = generate_toy_scene(&config).unwrap();
        let b = generate_toy_scene(&config).unwrap();

        assert_eq!(a.gaussians.len(), 50);
        assert_eq!(a.train.len(), 4);
        assert_eq!(a.test.len(), 2);
        assert_eq!(a.dense_parameter_count(), 50 * 59);
        for (va, vb) in a.train.iter().zip(&b.train) {
            assert_eq!(va.image.len(), 32 * 32 * 3);
            let bits_a: Vec<u32> = va.image.iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u32> = vb.image.iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
    }

    #[test]
    fn views_show_content_against_the_background() {
        let config = ToyConfig {
            gaussians: 120,
            train_views: 3,
            test_views: 1,
            ..ToyConfig::default()
        };
        let scene = generate_toy_scene(&config).unwrap();
        let bg = config.settings.background;
        for view in scene.train.iter().chain(&scene.test) {
            let touched = view
                .image
                .chunks_exact(3)
                .filter(|px| {
                    (px[0] - bg[0]).abs() > 0.02
                        || (px[1] - bg[1]).abs() > 0.02
                        || (px[2] - bg[2]).abs() > 0.02
                })
                .count();
            let total = view.image.len() / 3;
            assert!(
                touched * 10 >= total,
                "only {touched}/{total} pixels show the cloud"
            );
        }
    }

    #[test]
    fn cameras_differ_between_views() {
        let scene = generate_toy_scene(&ToyConfig {
            gaussians: 10,
            train_views: 5,
            test_views: 2,
            width: 16,
            height: 16,
            ..ToyConfig::default()
        })
        .unwrap();
        let centers: Vec<[f32; 3]> = scene
            .train
            .iter()
            .chain(&scene.test)
            .map(|v| v.camera.center())
            .collect();
        for i in 0..centers.len() {
            for j in i + 1..centers.len() {
                let d: f32 = (0..3)
                    .map(|k| (centers[i][k] - centers[j][k]).powi(2))
                    .sum();
                assert!(d > 1e-4, "views {i} and {j} share a camera center");
            }
        }
    }

    #[test]
    fn rejects_empty_configurations() {
        assert!(generate_toy_scene(&ToyConfig {
            gaussians: 0,
            ..ToyConfig::default()
        })
        .is_err());
        assert!(generate_toy_scene(&ToyConfig {
            train_views: 0,
            ..ToyConfig::default()
        })
        .is_err());
    }
}
