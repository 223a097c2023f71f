//! Held-out evaluation: image metrics per view plus render timing.

use std::time::Instant;

use fgs_core::model::FactorModel;

use crate::error::TrainError;
use crate::loss::{l1_loss, psnr};
use crate::pipeline::{prepare, render_view, PreparedScene, RenderSettings};
use crate::ssim::ssim;
use crate::trainer::TrainView;

/// Metrics for a single evaluated view.
#[derive(Debug, Clone, Copy)]
pub struct ViewMetrics {
    pub psnr: f64,
    pub ssim: f64,
    pub l1: f64,
    /// Wall time of projection plus rasterization for this view, in
    /// milliseconds. Model expansion is shared across views and not
    /// included.
    pub render_ms: f64,
}

/// Aggregate evaluation results.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub views: Vec<ViewMetrics>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub mean_l1: f64,
    pub median_render_ms: f64,
}

/// Renders every view once and scores it against its target.
pub fn evaluate(
    model: &FactorModel,
    views: &[TrainView],
    settings: &RenderSettings,
) -> Result<EvalReport, TrainError> {
    let scene = prepare(model)?;
    evaluate_prepared(&scene, views, settings)
}

/// Scores views against an already prepared scene; useful when the
/// caller wants to time or reuse the expansion separately.
pub fn evaluate_prepared(
    scene: &PreparedScene,
    views: &[TrainView],
    settings: &RenderSettings,
) -> Result<EvalReport, TrainError> {
    if views.is_empty() {
        return Err(TrainError::InvalidConfig(
            "evaluation needs at least one view".into(),
        ));
    }
    let mut metrics = Vec::with_capacity(views.len());
    for view in views {
        let started = Instant::now();
        let (_, output) = render_view(scene, &view.camera, settings)?;
        let render_ms = started.elapsed().as_secs_f64() * 1e3;
        metrics.push(ViewMetrics {
            psnr: psnr(&output.image, &view.image)?,
            ssim: ssim(&output.image, &view.image, view.camera.width, view.camera.height)?,
            l1: l1_loss(&output.image, &view.image)?,
            render_ms,
        });
    }
    let count = metrics.len() as f64;
    let mut times: Vec<f64> = metrics.iter().map(|m| m.render_ms).collect();
    times.sort_by(f64::total_cmp);
    let median_render_ms = if times.len() % 2 == 1 {
        times[times.len() / 2]
    } else {
        0.5 * (times[times.len() / 2 - 1] + times[times.len() / 2])
    };
    Ok(EvalReport {
        mean_psnr: metrics.iter().map(|m| m.psnr).sum::<f64>() / count,
        mean_ssim: metrics.iter().map(|m| m.ssim).sum::<f64>() / count,
        mean_l1: metrics.iter().map(|m| m.l1).sum::<f64>() / count,
        median_render_ms,
        views: metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use fgs_core::decoder::Decoder;
    use fgs_core::factor::CpBlock;
    use fgs_core::model::FactorModel;
    use fgs_render::Camera;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_model(seed: u64) -> FactorModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut block = CpBlock::new(2, 2).unwrap();
        for arr in block.arrays_mut() {
            for v in arr.iter_mut() {
                *v = rng.gen_range(-0.6..0.6);
            }
        }
        for v in block
            .scale_x
            .iter_mut()
            .chain(block.scale_y.iter_mut())
            .chain(block.scale_z.iter_mut())
        {
            *v = rng.gen_range(0.45..0.7);
        }
        for i in 0..block.resolution {
            block.rot_x[i * 4] = 1.0;
            block.rot_y[i * 4] = 1.0;
            block.rot_z[i * 4] = 1.0;
        }
        let decoder = Decoder::from_layer_dims(&[2, 10, 49], seed).unwrap();
        FactorModel::new_cp(vec![block], decoder, 0.01).unwrap()
    }

    fn camera(angle: f32) -> Camera {
        Camera::look_at(
            [2.4 * angle.sin(), 0.3, -2.4 * angle.cos()],
            [0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            22.0,
            22.0,
            20,
            16,
        )
        .unwrap()
    }

    #[test]
    fn self_rendered_views_score_perfectly() {
        let model = small_model(5);
        let settings = RenderSettings::default();
        let scene = prepare(&model).unwrap();
        let views: Vec<TrainView> = [0.0f32, 0.9, -1.1]
            .iter()
            .map(|&a| {
                let cam = camera(a);
                let (_, out) = render_view(&scene, &cam, &settings).unwrap();
                TrainView {
                    camera: cam,
                    image: out.image,
                }
            })
            .collect();

        let report = evaluate(&model, &views, &settings).unwrap();
        assert_eq!(report.views.len(), 3);
        assert_eq!(report.mean_psnr, 99.0);
        assert!((report.mean_ssim - 1.0).abs() < 1e-9);
        assert_eq!(report.mean_l1, 0.0);
        assert!(report.median_render_ms >= 0.0);
        for view in &report.views {
            assert_eq!(view.psnr, 99.0);
        }
    }

    #[test]
    fn imperfect_views_score_below_perfect() {
        let model = small_model(6);
        let settings = RenderSettings::default();
        let cam = camera(0.4);
        let mut target = vec![0.0f32; cam.width * cam.height * 3];
        for (i, v) in target.iter_mut().enumerate() {
            *v = (i % 7) as f32 / 7.0;
        }
        let views = vec![TrainView {
            camera: cam,
            image: target,
        }];
        let report = evaluate(&model, &views, &settings).unwrap();
        assert!(report.mean_psnr < 99.0);
        assert!(report.mean_ssim < 1.0);
        assert!(report.mean_l1 > 0.0);
    }

    #[test]
    fn rejects_empty_view_lists() {
        let model = small_model(7);
        assert!(evaluate(&model, &[], &RenderSettings::default()).is_err());
    }
}
