//! The train subcommand: config assembly, model setup, the run itself
//! and the run directory it leaves behind.

use std::fs;
use std::path::{Path, PathBuf};

use fgs_core::factor::CpBlock;
use fgs_core::init::{build_histogram, random_blocks, seed_blocks};
use fgs_core::model::{load_model_file, save_model_file, FactorModel};
use fgs_core::ply::read_ply_file;
use fgs_train::{TrainConfig, TrainReport, TrainView, Trainer};

use crate::args::{InitModeArg, TrainArgs};
use crate::error::CliError;
use crate::manifest::Manifest;
use crate::scene::{self, LoadedSplit};
use crate::setup::model_from_cp_blocks;

/// Merges the config file, --set pairs and flag shortcuts, in that
/// order, so later sources win.
pub fn assemble_config(args: &TrainArgs) -> Result<TrainConfig, CliError> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                CliError::Data(format!("config {}: {e}", path.display()))
            })?;
            TrainConfig::from_lines(text.lines())?
        }
        None => TrainConfig::default(),
    };
    for pair in &args.set {
        let (key, value) = pair.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("--set wants KEY=VALUE, got {pair:?}"))
        })?;
        config.apply(key.trim(), value)?;
    }
    if let Some(steps) = args.steps {
        config.steps = steps;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

/// Bounding box of the camera positions, shrunk toward its center: the
/// subject sits inside the rig, so blocks start near it rather than at
/// the cameras themselves.
fn camera_bounds(views: &[TrainView]) -> ([f32; 3], [f32; 3]) {
    let mut lo = [f32::INFINITY; 3];
    let mut hi = [f32::NEG_INFINITY; 3];
    for view in views {
        let c = view.camera.center();
        for axis in 0..3 {
            lo[axis] = lo[axis].min(c[axis]);
            hi[axis] = hi[axis].max(c[axis]);
        }
    }
    let mut slo = [0.0f32; 3];
    let mut shi = [0.0f32; 3];
    for axis in 0..3 {
        let center = 0.5 * (lo[axis] + hi[axis]);
        let half = (0.35 * (hi[axis] - lo[axis])).max(0.25);
        slo[axis] = center - half;
        shi[axis] = center + half;
    }
    (slo, shi)
}

/// Builds a fresh model for a scene, honoring the requested init mode.
/// Returns the model plus any extra file the init read, for the
/// manifest.
pub fn fresh_model(
    args: &TrainArgs,
    config: &TrainConfig,
    train: &LoadedSplit,
) -> Result<(FactorModel, Option<PathBuf>), CliError> {
    let points = scene::points_path(&args.scene);
    let use_points = match args.init {
        InitModeArg::Points => {
            if !points.exists() {
                return Err(CliError::Data(format!(
                    "--init points needs {}",
                    points.display()
                )));
            }
            true
        }
        InitModeArg::Auto => points.exists(),
        InitModeArg::Random => false,
    };
    let (blocks, read): (Vec<CpBlock>, Option<PathBuf>) = if use_points {
        let cloud = read_ply_file(&points)?;
        let hist = build_histogram(
            &cloud.positions,
            cloud.colors.as_deref(),
            args.interval,
            fgs_core::init::DEFAULT_EXPAND,
        )?;
        let blocks = seed_blocks(
            &hist,
            args.shape.resolution,
            args.lambda,
            args.shape.feature_dim,
            config.seed,
        )?;
        if blocks.is_empty() {
            return Err(CliError::Data(format!(
                "no histogram bin holds more than {} points; lower --lambda or grow --interval",
                args.lambda
            )));
        }
        (blocks, Some(points))
    } else {
        let (lo, hi) = camera_bounds(&train.views);
        let blocks = random_blocks(
            lo,
            hi,
            args.blocks,
            args.shape.resolution,
            args.shape.feature_dim,
            config.seed,
        )?;
        (blocks, None)
    };
    let model = model_from_cp_blocks(&args.shape, blocks, config.seed)?;
    Ok((model, read))
}

/// Writes the per-step metrics table.
fn write_metrics(path: &Path, report: &TrainReport) -> Result<(), CliError> {
    let mut text = String::from(
        "step,loss,l1,dssim,mask_loss,psnr,rendered,active,coord_grad_norm,elapsed_ms\n",
    );
    for row in &report.log {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            row.step,
            row.loss,
            row.l1,
            row.dssim,
            row.mask_loss,
            row.psnr,
            row.rendered,
            row.active,
            row.coord_grad_norm,
            row.elapsed_ms,
        ));
    }
    fs::write(path, text)?;
    Ok(())
}

/// Writes the held-out metrics table, if any rows exist.
fn write_evals(path: &Path, report: &TrainReport) -> Result<(), CliError> {
    if report.evals.is_empty() {
        return Ok(());
    }
    let mut text = String::from("step,mean_psnr,mean_ssim\n");
    for row in &report.evals {
        text.push_str(&format!("{},{},{}\n", row.step, row.mean_psnr, row.mean_ssim));
    }
    fs::write(path, text)?;
    Ok(())
}

/// Runs the train subcommand. The run directory always receives the
/// model, metrics and manifest; a diverged run additionally exits with
/// the numerical-failure code after saving its last good state.
pub fn run_train(args: &TrainArgs) -> Result<(), CliError> {
    let config = assemble_config(args)?;
    let train = scene::load_split(&args.scene, "train", config.background)?;
    let test = scene::load_split_optional(&args.scene, "test", config.background)?;

    let (model, init_input) = match &args.model {
        Some(path) => (load_model_file(path)?, None),
        None => {
            let (model, read) = fresh_model(args, &config, &train)?;
            (model, read)
        }
    };

    let mut manifest = Manifest::new("train", config.seed);
    for (key, value) in config.to_pairs() {
        manifest.config.insert(key, value);
    }
    if let Some(path) = &args.config {
        manifest.add_input(path)?;
    }
    if let Some(path) = &args.model {
        manifest.add_input(path)?;
    }
    if let Some(path) = &init_input {
        manifest.add_input(path)?;
    }
    manifest.add_input(&train.transforms)?;
    for image in &train.images {
        manifest.add_input(image)?;
    }
    if let Some(split) = &test {
        manifest.add_input(&split.transforms)?;
        for image in &split.images {
            manifest.add_input(image)?;
        }
    }

    let eval_views = test.map(|s| s.views).unwrap_or_default();
    let mut trainer = Trainer::new(model, train.views, eval_views, config.clone())?;
    let report = trainer.run()?;
    let model = trainer.into_model();

    fs::create_dir_all(&args.out_dir)?;
    let model_path = args.out_dir.join("model.f3gs");
    let metrics_path = args.out_dir.join("metrics.csv");
    let evals_path = args.out_dir.join("eval.csv");
    let config_path = args.out_dir.join("config.txt");
    save_model_file(&model, &model_path)?;
    write_metrics(&metrics_path, &report)?;
    write_evals(&evals_path, &report)?;
    let flat: String = config
        .to_pairs()
        .into_iter()
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect();
    fs::write(&config_path, flat)?;

    let (_, active) = model.masks.occupancy()?;
    manifest.result = serde_json::json!({
        "steps_run": report.steps_run,
        "diverged_at": report.diverged_at,
        "final_loss": report.final_loss,
        "active_gaussians": active,
        "mean_test_psnr": report.evals.last().map(|e| e.mean_psnr),
    });
    manifest.add_output(&model_path)?;
    manifest.add_output(&metrics_path)?;
    if evals_path.exists() {
        manifest.add_output(&evals_path)?;
    }
    manifest.add_output(&config_path)?;
    manifest.save(args.out_dir.join("manifest.json"))?;

    for row in &report.log {
        println!(
            "step {:>6}  loss {:.6}  l1 {:.6}  dssim {:.6}  psnr {:.2}  active {}",
            row.step, row.loss, row.l1, row.dssim, row.psnr, row.active
        );
    }
    for row in &report.evals {
        println!(
            "eval at step {:>6}: psnr {:.2}  ssim {:.4}",
            row.step, row.mean_psnr, row.mean_ssim
        );
    }

    if let Some(step) = report.diverged_at {
        return Err(CliError::Numerical(format!(
            "training diverged at step {step}; {} holds the last good model",
            args.out_dir.display()
        )));
    }
    println!(
        "finished {} steps; saved run to {}",
        report.steps_run,
        args.out_dir.display()
    );
    Ok(())
}
