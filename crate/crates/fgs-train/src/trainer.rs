//! The optimization loop: Adam over every trainable array, epoch-wise
//! view shuffling, coordinate freezing and divergence recovery.

use fgs_core::adam::AdamState;
use fgs_core::mask::{mask_loss, mask_loss_grad, MaskState};
use fgs_core::model::{FactorModel, ParamKind};
use fgs_core::CoreError;
use fgs_render::Camera;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::TrainConfig;
use crate::error::TrainError;
use crate::eval::evaluate;
use crate::loss::image_loss;
use crate::pipeline::{backward, forward, RenderSettings};

/// One observed view: a camera and the RGB image it should reproduce.
#[derive(Debug, Clone)]
pub struct TrainView {
    pub camera: Camera,
    /// Row-major RGB target, `width * height * 3` values.
    pub image: Vec<f32>,
}

/// One metrics row, recorded every `log_every` steps.
#[derive(Debug, Clone, Copy)]
pub struct LogRow {
    pub step: usize,
    /// Full objective including the sparsity term.
    pub loss: f64,
    pub l1: f64,
    pub dssim: f64,
    /// Sparsity regularizer before weighting.
    pub mask_loss: f64,
    /// Peak signal-to-noise ratio of this step's render against its
    /// target view, in dB.
    pub psnr: f64,
    /// Splats that survived projection for this view.
    pub rendered: usize,
    /// Gaussians that survived masking.
    pub active: usize,
    /// L2 norm of the gradient over all coordinate arrays. A lurching
    /// value here is the usual first sign of an unstable run.
    pub coord_grad_norm: f64,
    /// Wall-clock milliseconds since the run started.
    pub elapsed_ms: f64,
}

/// Held-out metrics, recorded every `eval_every` steps.
#[derive(Debug, Clone, Copy)]
pub struct EvalRow {
    pub step: usize,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

/// What a training run produced.
#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Steps fully applied; equals the configured count unless the run
    /// diverged.
    pub steps_run: usize,
    /// Step at which a non-finite loss or gradient appeared, if any.
    /// The trainer then rolls the model back to the last checkpoint.
    pub diverged_at: Option<usize>,
    /// Objective of the last completed step.
    pub final_loss: f64,
    pub log: Vec<LogRow>,
    pub evals: Vec<EvalRow>,
}

/// Owns a model and drives it toward the training views. The model
/// keeps trainable masks while the trainer holds it; [`Trainer::into_model`]
/// freezes them for saving.
pub struct Trainer {
    model: FactorModel,
    config: TrainConfig,
    train_views: Vec<TrainView>,
    eval_views: Vec<TrainView>,
    optimizers: Vec<AdamState>,
}

impl Trainer {
    /// Validates the inputs, thaws frozen masks so they can train, and
    /// sets up one optimizer per parameter array.
    pub fn new(
        mut model: FactorModel,
        train_views: Vec<TrainView>,
        eval_views: Vec<TrainView>,
        config: TrainConfig,
    ) -> Result<Self, TrainError> {
        config.validate()?;
        model.validate()?;
        if train_views.is_empty() {
            return Err(TrainError::InvalidConfig(
                "training needs at least one view".into(),
            ));
        }
        for (idx, view) in train_views.iter().chain(&eval_views).enumerate() {
            view.camera.validate()?;
            let want = view.camera.width * view.camera.height * 3;
            if view.image.len() != want {
                return Err(TrainError::ShapeMismatch(format!(
                    "view {idx}: camera wants {want} image values, got {}",
                    view.image.len()
                )));
            }
        }
        if let MaskState::Frozen(_) = model.masks.state {
            let tau = model.masks.threshold;
            model.masks.thaw(tau + 0.1, tau - 0.1)?;
        }
        let optimizers = model
            .param_arrays_mut()
            .iter()
            .map(|(_, arr)| AdamState::new(arr.len()))
            .collect();
        Ok(Self {
            model,
            config,
            train_views,
            eval_views,
            optimizers,
        })
    }

    /// Current model state; masks stay trainable here.
    pub fn model(&self) -> &FactorModel {
        &self.model
    }

    /// Hands the model back with masks frozen, ready to save.
    pub fn into_model(mut self) -> FactorModel {
        self.model.masks.freeze();
        self.model
    }

    /// Runs the configured number of steps. On a non-finite loss or
    /// gradient the model rolls back to the last checkpoint and the
    /// report carries the step that failed.
    pub fn run(&mut self) -> Result<TrainReport, TrainError> {
        let settings = RenderSettings::from_config(&self.config);
        let freeze_at = self.config.freeze_step();
        let steps = self.config.steps;
        let lambda_mask = self.config.lambda_mask;

        let started = std::time::Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let mut order: Vec<usize> = (0..self.train_views.len()).collect();
        let mut checkpoint = self.model.clone();
        let mut report = TrainReport {
            steps_run: 0,
            diverged_at: None,
            final_loss: f64::NAN,
            log: Vec::new(),
            evals: Vec::new(),
        };

        for step in 0..steps {
            if step % order.len() == 0 {
                order.shuffle(&mut rng);
            }
            let view = &self.train_views[order[step % order.len()]];
            let (width, height) = (view.camera.width, view.camera.height);

            let pass = forward(&self.model, &view.camera, &settings)?;
            let (parts, grad_image) = image_loss(
                &pass.output.image,
                &view.image,
                width,
                height,
                self.config.lambda_dssim,
            )?;
            let sparsity = match &self.model.masks.state {
                MaskState::Training(grids) => {
                    grids.iter().map(|g| mask_loss(&g.values)).sum::<f64>()
                }
                MaskState::Frozen(_) => 0.0,
            };
            let total = parts.total + f64::from(lambda_mask) * sparsity;
            if !total.is_finite() {
                self.model = checkpoint;
                report.diverged_at = Some(step);
                return Ok(report);
            }

            let mut grads = backward(&self.model, &pass, &view.camera, &settings, &grad_image)?;
            if lambda_mask > 0.0 {
                if let MaskState::Training(grids) = &self.model.masks.state {
                    // Mask arrays sit at the tail of the parameter order,
                    // one per grid.
                    let first_mask = grads.arrays.len() - grids.len();
                    for (grid, slot) in grids.iter().zip(first_mask..) {
                        let slope = mask_loss_grad(&grid.values);
                        for (g, s) in grads.arrays[slot].iter_mut().zip(&slope) {
                            *g += lambda_mask * s;
                        }
                    }
                }
            }

            let params = self.model.param_arrays_mut();
            if params.len() != grads.arrays.len() || params.len() != self.optimizers.len() {
                return Err(TrainError::ShapeMismatch(format!(
                    "{} parameter arrays, {} gradients, {} optimizers",
                    params.len(),
                    grads.arrays.len(),
                    self.optimizers.len()
                )));
            }
            let lr_scale = self.config.lr_scale(step);
            let mut coord_grad_sq = 0.0f64;
            let mut blew_up = false;
            for ((optimizer, (kind, array)), grad) in self
                .optimizers
                .iter_mut()
                .zip(params)
                .zip(&grads.arrays)
            {
                if kind == ParamKind::Coordinate {
                    coord_grad_sq += grad
                        .iter()
                        .map(|&g| f64::from(g) * f64::from(g))
                        .sum::<f64>();
                    if step >= freeze_at {
                        continue;
                    }
                }
                let lr = lr_scale
                    * match kind {
                        ParamKind::Coordinate | ParamKind::Attribute => self.config.lr_factors,
                        ParamKind::Decoder => self.config.lr_decoder,
                        ParamKind::Mask => self.config.lr_mask,
                    };
                match optimizer.step(array, grad, lr) {
                    Ok(()) => {}
                    Err(CoreError::NumericalFailure(_)) => {
                        blew_up = true;
                        break;
                    }
                    Err(other) => return Err(other.into()),
                }
            }
            if blew_up {
                self.model = checkpoint;
                report.diverged_at = Some(step);
                return Ok(report);
            }

            report.steps_run = step + 1;
            report.final_loss = total;
            if step % self.config.log_every == 0 || step + 1 == steps {
                report.log.push(LogRow {
                    step,
                    loss: total,
                    l1: parts.l1,
                    dssim: parts.dssim,
                    mask_loss: sparsity,
                    psnr: crate::loss::psnr(&pass.output.image, &view.image)?,
                    rendered: pass.splats.len(),
                    active: pass.scene.active(),
                    coord_grad_norm: coord_grad_sq.sqrt(),
                    elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
                });
            }

            let eval_due = self.config.eval_every > 0
                && !self.eval_views.is_empty()
                && ((step + 1) % self.config.eval_every == 0 || step + 1 == steps);
            if eval_due {
                let eval = evaluate(&self.model, &self.eval_views, &settings)?;
                report.evals.push(EvalRow {
                    step,
                    mean_psnr: eval.mean_psnr,
                    mean_ssim: eval.mean_ssim,
                });
            }
            if self.config.eval_every > 0 && (step + 1) % self.config.eval_every == 0 {
                checkpoint = self.model.clone();
            }
        }

        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{forward, prepare, render_view};
    use fgs_core::decoder::Decoder;
    use fgs_core::factor::CpBlock;
    use rand::Rng;

    fn filled_cp_model(seed: u64) -> FactorModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut block = CpBlock::new(2, 2).unwrap();
        let mut fill = |values: &mut Vec<f32>, lo: f32, hi: f32| {
            for v in values.iter_mut() {
                *v = rng.gen_range(lo..hi);
            }
        };
        fill(&mut block.coord_x, -0.5, 0.5);
        fill(&mut block.coord_y, -0.5, 0.5);
        fill(&mut block.coord_z, -0.5, 0.5);
        fill(&mut block.scale_x, 0.45, 0.8);
        fill(&mut block.scale_y, 0.45, 0.8);
        fill(&mut block.scale_z, 0.45, 0.8);
        fill(&mut block.rot_x, -0.4, 0.4);
        fill(&mut block.rot_y, -0.4, 0.4);
        fill(&mut block.rot_z, -0.4, 0.4);
        for i in 0..block.resolution {
            block.rot_x[i * 4] = 1.0;
            block.rot_y[i * 4] = 1.0;
            block.rot_z[i * 4] = 1.0;
        }
        fill(&mut block.feat_x, -0.8, 0.8);
        fill(&mut block.feat_y, -0.8, 0.8);
        fill(&mut block.feat_z, -0.8, 0.8);
        let decoder = Decoder::from_layer_dims(&[2, 12, 49], seed ^ 0xA5A5).unwrap();
        FactorModel::new_cp(vec![block], decoder, 0.01).unwrap()
    }

    fn two_cameras() -> Vec<Camera> {
        vec![
            Camera::look_at(
                [0.1, -0.25, -2.6],
                [0.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                20.0,
                20.0,
                24,
                18,
            )
            .unwrap(),
            Camera::look_at(
                [1.6, 0.3, -2.1],
                [0.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                20.0,
                20.0,
                24,
                18,
            )
            .unwrap(),
        ]
    }

    /// Renders the standard camera pair from a model to use as targets.
    fn views_from_model(model: &FactorModel, settings: &RenderSettings) -> Vec<TrainView> {
        let scene = prepare(model).unwrap();
        two_cameras()
            .into_iter()
            .map(|camera| {
                let (_, out) = render_view(&scene, &camera, settings).unwrap();
                TrainView {
                    camera,
                    image: out.image,
                }
            })
            .collect()
    }

    fn quick_config(steps: usize) -> TrainConfig {
        TrainConfig {
            steps,
            eval_every: 0,
            log_every: 10,
            seed: 7,
            ..TrainConfig::default()
        }
    }

    fn array_bits(model: &mut FactorModel) -> Vec<Vec<u32>> {
        model
            .param_arrays_mut()
            .iter()
            .map(|(_, arr)| arr.iter().map(|v| v.to_bits()).collect())
            .collect()
    }

    #[test]
    fn loss_drops_while_fitting_another_models_views() {
        let settings = RenderSettings::default();
        let target_model = filled_cp_model(1000);
        let views = views_from_model(&target_model, &settings);

        let config = quick_config(150);
        let mut trainer =
            Trainer::new(filled_cp_model(2000), views, Vec::new(), config).unwrap();
        let report = trainer.run().unwrap();

        assert_eq!(report.steps_run, 150);
        assert!(report.diverged_at.is_none());
        let first = report.log.first().unwrap().loss;
        let last = report.final_loss;
        assert!(
            last < 0.6 * first,
            "loss should drop substantially: {first} -> {last}"
        );
        let norm = report.log.first().unwrap().coord_grad_norm;
        assert!(norm.is_finite() && norm > 0.0);
        assert!(matches!(
            trainer.model().masks.state,
            MaskState::Training(_)
        ));
        // Handing the model back freezes the masks for saving.
        let done = trainer.into_model();
        assert!(matches!(done.masks.state, MaskState::Frozen(_)));
    }

    #[test]
    fn identical_seeds_give_bitwise_identical_models() {
        let settings = RenderSettings::default();
        let views = views_from_model(&filled_cp_model(11), &settings);

        let run = || {
            let mut trainer = Trainer::new(
                filled_cp_model(12),
                views.clone(),
                Vec::new(),
                quick_config(40),
            )
            .unwrap();
            trainer.run().unwrap();
            trainer.into_model()
        };
        let mut a = run();
        let mut b = run();
        assert_eq!(array_bits(&mut a), array_bits(&mut b));
    }

    #[test]
    fn frozen_coordinates_stay_bitwise_fixed() {
        let settings = RenderSettings::default();
        let views = views_from_model(&filled_cp_model(21), &settings);
        let mut start = filled_cp_model(22);
        let coords_before: Vec<Vec<u32>> = start
            .param_arrays_mut()
            .iter()
            .filter(|(kind, _)| *kind == ParamKind::Coordinate)
            .map(|(_, arr)| arr.iter().map(|v| v.to_bits()).collect())
            .collect();
        let attrs_before: Vec<Vec<u32>> = start
            .param_arrays_mut()
            .iter()
            .filter(|(kind, _)| *kind == ParamKind::Attribute)
            .map(|(_, arr)| arr.iter().map(|v| v.to_bits()).collect())
            .collect();

        let config = TrainConfig {
            freeze_coordinates_at: Some(0),
            ..quick_config(30)
        };
        let mut trainer = Trainer::new(start, views, Vec::new(), config).unwrap();
        trainer.run().unwrap();

        let mut done = trainer.into_model();
        let mut coord_idx = 0;
        let mut attr_idx = 0;
        let mut attribute_moved = false;
        for (kind, arr) in done.param_arrays_mut() {
            let bits: Vec<u32> = arr.iter().map(|v| v.to_bits()).collect();
            match kind {
                ParamKind::Coordinate => {
                    assert_eq!(bits, coords_before[coord_idx], "coordinate array moved");
                    coord_idx += 1;
                }
                ParamKind::Attribute => {
                    if bits != attrs_before[attr_idx] {
                        attribute_moved = true;
                    }
                    attr_idx += 1;
                }
                _ => {}
            }
        }
        assert_eq!(coord_idx, coords_before.len());
        assert!(attribute_moved, "attributes should keep training");
    }

    #[test]
    fn perfect_pure_l1_fit_is_a_fixed_point() {
        // Targets rendered from the starting model itself: every pixel
        // ties exactly, the absolute-error slope is zero everywhere, and
        // with the structural and sparsity terms off nothing may move.
        let settings = RenderSettings::default();
        let mut reference = filled_cp_model(31);
        let views = views_from_model(&reference, &settings);

        let config = TrainConfig {
            lambda_dssim: 0.0,
            lambda_mask: 0.0,
            ..quick_config(5)
        };
        let mut trainer =
            Trainer::new(filled_cp_model(31), views, Vec::new(), config).unwrap();
        let report = trainer.run().unwrap();
        assert_eq!(report.final_loss, 0.0);

        let mut done = trainer.model().clone();
        assert_eq!(array_bits(&mut done), array_bits(&mut reference));
    }

    #[test]
    fn sparsity_pressure_lowers_mask_values() {
        // Same perfect-fit setup, but only the sparsity term is active
        // and only masks may move: every grid value must fall, while the
        // few steps taken cannot yet push any cell across the threshold.
        let settings = RenderSettings::default();
        let start = filled_cp_model(37);
        let views = views_from_model(&start, &settings);
        let before = match &start.masks.state {
            MaskState::Training(grids) => grids[0].values.clone(),
            MaskState::Frozen(_) => unreachable!("fresh models train their masks"),
        };

        let config = TrainConfig {
            lambda_dssim: 0.0,
            lambda_mask: 0.05,
            lr_factors: 0.0,
            lr_decoder: 0.0,
            ..quick_config(6)
        };
        let mut trainer = Trainer::new(start, views, Vec::new(), config).unwrap();
        let report = trainer.run().unwrap();
        assert_eq!(report.steps_run, 6);

        match &trainer.model().masks.state {
            MaskState::Training(grids) => {
                for (cell, (&now, &was)) in grids[0].values.iter().zip(&before).enumerate() {
                    assert!(now < was, "cell {cell}: {now} should fall below {was}");
                    assert!(
                        now > trainer.model().masks.threshold,
                        "cell {cell} crossed the threshold too fast"
                    );
                }
            }
            MaskState::Frozen(_) => unreachable!("masks freeze only on into_model"),
        }
        // Nothing rendered differently, so the photometric loss
        // contributed nothing.
        assert_eq!(report.log.last().unwrap().l1, 0.0);
    }

    #[test]
    fn zero_steps_leave_the_model_bitwise_untouched() {
        let settings = RenderSettings::default();
        let mut start = filled_cp_model(81);
        let before = array_bits(&mut start);
        let views = views_from_model(&start, &settings);
        let mut trainer = Trainer::new(start, views, Vec::new(), quick_config(0)).unwrap();
        let report = trainer.run().unwrap();
        assert_eq!(report.steps_run, 0);
        assert!(report.log.is_empty());
        let mut done = trainer.model().clone();
        assert_eq!(array_bits(&mut done), before);
    }

    #[test]
    fn lr_decay_shrinks_later_updates() {
        let settings = RenderSettings::default();
        let views = views_from_model(&filled_cp_model(91), &settings);
        let start = filled_cp_model(92);

        let displacement = |lr_decay: f32| {
            let mut before = start.clone();
            let config = TrainConfig {
                lr_decay,
                ..quick_config(6)
            };
            let mut trainer =
                Trainer::new(start.clone(), views.clone(), Vec::new(), config).unwrap();
            trainer.run().unwrap();
            let mut done = trainer.model().clone();
            done.param_arrays_mut()
                .iter()
                .zip(before.param_arrays_mut())
                .flat_map(|((_, now), (_, was))| {
                    now.iter()
                        .zip(was.iter())
                        .map(|(a, b)| f64::from(a - b).powi(2))
                        .collect::<Vec<f64>>()
                })
                .sum::<f64>()
                .sqrt()
        };

        let constant = displacement(1.0);
        let decayed = displacement(1e-8);
        assert!(
            decayed < 0.5 * constant,
            "decay should damp the later steps: {decayed} vs {constant}"
        );
    }

    #[test]
    fn nan_targets_trigger_rollback_to_checkpoint() {
        let mut start = filled_cp_model(41);
        let before = array_bits(&mut start);
        let camera = two_cameras().remove(0);
        let views = vec![TrainView {
            image: vec![f32::NAN; camera.width * camera.height * 3],
            camera,
        }];
        let mut trainer = Trainer::new(start, views, Vec::new(), quick_config(10)).unwrap();
        let report = trainer.run().unwrap();
        assert_eq!(report.diverged_at, Some(0));
        assert_eq!(report.steps_run, 0);
        let mut rolled_back = trainer.model().clone();
        assert_eq!(array_bits(&mut rolled_back), before);
    }

    #[test]
    fn eval_rows_follow_the_configured_cadence() {
        let settings = RenderSettings::default();
        let views = views_from_model(&filled_cp_model(71), &settings);
        let eval_views = vec![views[0].clone()];
        let config = TrainConfig {
            eval_every: 4,
            ..quick_config(10)
        };
        let mut trainer =
            Trainer::new(filled_cp_model(72), views, eval_views, config).unwrap();
        let report = trainer.run().unwrap();
        let steps: Vec<usize> = report.evals.iter().map(|e| e.step).collect();
        assert_eq!(steps, vec![3, 7, 9]);
        for row in &report.evals {
            assert!(row.mean_psnr.is_finite());
            assert!(row.mean_ssim <= 1.0);
        }
    }

    #[test]
    fn rejects_empty_views_and_bad_shapes() {
        let model = filled_cp_model(51);
        assert!(Trainer::new(
            model.clone(),
            Vec::new(),
            Vec::new(),
            quick_config(5)
        )
        .is_err());

        let camera = two_cameras().remove(0);
        let views = vec![TrainView {
            image: vec![0.5; 7],
            camera,
        }];
        assert!(Trainer::new(model, views, Vec::new(), quick_config(5)).is_err());
    }

    #[test]
    fn forward_pass_counts_masked_rows() {
        // Cheap sanity anchor for the log fields.
        let model = filled_cp_model(61);
        let settings = RenderSettings::default();
        let camera = two_cameras().remove(0);
        let pass = forward(&model, &camera, &settings).unwrap();
        assert_eq!(pass.scene.active(), 8);
        assert!(pass.splats.len() <= 8);
    }
}
