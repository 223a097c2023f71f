//! Building fresh models: point-cloud seeding, random placement and the
//! rendering-free coordinate fit.

use std::path::Path;

use fgs_core::decoder::Decoder;
use fgs_core::factor::CpBlock;
use fgs_core::init::{
    build_histogram, fit_coordinates_chamfer, random_blocks, seed_blocks, vm_blocks_from_cp,
};
use fgs_core::model::{save_model_file, FactorModel, Scheme};
use fgs_core::ply::read_ply_file;
use fgs_core::sh::SH_COEFFS;

use crate::args::{FitPointsArgs, InitArgs, SchemeArg, ShapeArgs};
use crate::error::CliError;

/// Decoder layer sizes for a scheme: one hidden layer under CP, two
/// under VM, ending in the harmonics plus one opacity.
pub fn decoder_dims(scheme: Scheme, feature_dim: usize, hidden: Option<usize>) -> Vec<usize> {
    let out = SH_COEFFS + 1;
    match scheme {
        Scheme::Cp => vec![feature_dim, hidden.unwrap_or(128), out],
        Scheme::Vm => {
            let h = hidden.unwrap_or(64);
            vec![feature_dim, h, h, out]
        }
    }
}

/// Wraps seeded CP blocks into a model of the requested shape,
/// converting them to VM form when asked.
pub fn model_from_cp_blocks(
    shape: &ShapeArgs,
    cp_blocks: Vec<CpBlock>,
    seed: u64,
) -> Result<FactorModel, CliError> {
    let scheme: Scheme = shape.scheme.into();
    // The decoder and any VM plane seeding draw from their own streams.
    let decoder = Decoder::from_layer_dims(
        &decoder_dims(scheme, shape.feature_dim, shape.hidden),
        seed.wrapping_add(1),
    )?;
    let model = match shape.scheme {
        SchemeArg::Cp => FactorModel::new_cp(cp_blocks, decoder, shape.mask_threshold)?,
        SchemeArg::Vm => {
            let vm = vm_blocks_from_cp(&cp_blocks, seed.wrapping_add(2))?;
            FactorModel::new_vm(vm, shape.vm_mode.into(), decoder, shape.mask_threshold)?
        }
    };
    Ok(model)
}

/// Axis-aligned bounding box of a point set.
pub fn bounding_box(points: &[[f32; 3]]) -> Result<([f32; 3], [f32; 3]), CliError> {
    if points.is_empty() {
        return Err(CliError::Data("point set is empty".into()));
    }
    let mut lo = [f32::INFINITY; 3];
    let mut hi = [f32::NEG_INFINITY; 3];
    for p in points {
        for axis in 0..3 {
            lo[axis] = lo[axis].min(p[axis]);
            hi[axis] = hi[axis].max(p[axis]);
        }
    }
    Ok((lo, hi))
}

/// Builds the blocks for `init` from a point cloud, honoring --random.
pub fn init_blocks(args: &InitArgs) -> Result<Vec<CpBlock>, CliError> {
    let cloud = read_ply_file(&args.ply)?;
    let blocks = if args.random {
        let count = args.blocks.ok_or_else(|| {
            CliError::Usage("--random needs --blocks to size the model".into())
        })?;
        let (lo, hi) = bounding_box(&cloud.positions)?;
        random_blocks(
            lo,
            hi,
            count,
            args.shape.resolution,
            args.shape.feature_dim,
            args.seed,
        )?
    } else {
        let hist = build_histogram(
            &cloud.positions,
            cloud.colors.as_deref(),
            args.interval,
            args.expand,
        )?;
        seed_blocks(
            &hist,
            args.shape.resolution,
            args.lambda,
            args.shape.feature_dim,
            args.seed,
        )?
    };
    if blocks.is_empty() {
        return Err(CliError::Data(format!(
            "no histogram bin holds more than {} points; lower --lambda or grow --interval",
            args.lambda
        )));
    }
    Ok(blocks)
}

/// Runs the init subcommand.
pub fn run_init(args: &InitArgs) -> Result<(), CliError> {
    let blocks = init_blocks(args)?;
    let model = model_from_cp_blocks(&args.shape, blocks, args.seed)?;
    save_and_summarize(&model, &args.out, "initialized")
}

/// Runs the fit-points subcommand.
pub fn run_fit_points(args: &FitPointsArgs) -> Result<(), CliError> {
    let cloud = read_ply_file(&args.ply)?;
    let report = fit_coordinates_chamfer(
        &cloud.positions,
        args.blocks,
        args.resolution,
        args.steps,
        args.lr,
        args.seed,
    )?;
    let first = report.losses.first().copied().unwrap_or(f64::NAN);
    let last = report.losses.last().copied().unwrap_or(f64::NAN);
    println!(
        "chamfer distance {first:.6} -> {last:.6} over {} steps",
        args.steps
    );

    // The fit works on one feature channel per axis; the saved decoder
    // matches that width.
    let shape = ShapeArgs {
        scheme: SchemeArg::Cp,
        vm_mode: crate::args::VmModeArg::Product,
        resolution: args.resolution,
        feature_dim: 1,
        hidden: Some(args.hidden),
        mask_threshold: args.mask_threshold,
    };
    let model = model_from_cp_blocks(&shape, report.blocks, args.seed)?;
    save_and_summarize(&model, &args.out, "fitted")
}

/// Saves a model and prints its one-line storage summary.
fn save_and_summarize(model: &FactorModel, out: &Path, verb: &str) -> Result<(), CliError> {
    save_model_file(model, out)?;
    let report = model.storage_report()?;
    println!(
        "{verb} {} model: {} blocks, {} representable gaussians, {} factor scalars -> {}",
        match model.scheme {
            Scheme::Cp => "cp",
            Scheme::Vm => "vm",
        },
        report.blocks,
        report.representable_gaussians,
        report.stored_factor_scalars(),
        out.display(),
    );
    Ok(())
}
