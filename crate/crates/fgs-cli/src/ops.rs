//! Single-model operations: render, evaluate, prune and report.

use std::fs;

use fgs_core::mask::{pack_bits, MaskState, PackedMask};
use fgs_core::model::{load_model_file, save_model_file, Scheme};
use fgs_render::{save_image, TransformSet};
use fgs_train::{evaluate, prepare, render_view, RenderSettings};

use crate::args::{EvaluateArgs, PruneArgs, RenderArgs, ReportArgs};
use crate::error::CliError;
use crate::scene::load_split;

/// Runs the render subcommand.
pub fn run_render(args: &RenderArgs) -> Result<(), CliError> {
    let model = load_model_file(&args.model)?;
    let set = TransformSet::load(&args.camera)?;
    let camera = set.camera(args.frame, args.width, args.height)?;
    let settings = RenderSettings {
        background: args.background,
        ..RenderSettings::default()
    };
    let scene = prepare(&model)?;
    let (splats, output) = render_view(&scene, &camera, &settings)?;
    save_image(&args.out, args.width, args.height, &output.image)?;
    println!(
        "rendered {} of {} active gaussians to {}",
        splats.len(),
        scene.active(),
        args.out.display()
    );
    Ok(())
}

/// Runs the evaluate subcommand, printing one JSON object.
pub fn run_evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let model = load_model_file(&args.model)?;
    let model_bytes = fs::metadata(&args.model)?.len();
    let split = load_split(&args.scene, args.split.name(), args.background)?;
    let settings = RenderSettings {
        background: args.background,
        ..RenderSettings::default()
    };
    let report = evaluate(&model, &split.views, &settings)?;
    let (_, active) = model.masks.occupancy()?;
    let summary = serde_json::json!({
        "psnr": report.mean_psnr,
        "ssim": report.mean_ssim,
        "l1": report.mean_l1,
        "render_ms": report.median_render_ms,
        "model_bytes": model_bytes,
        "gaussian_count": active,
        "views": split.views.len(),
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&summary)
            .map_err(|e| CliError::Data(format!("summary serialization: {e}")))?
    );
    Ok(())
}

/// Switches off every mask cell whose decoded opacity falls below the
/// floor and returns (cells switched off, cells still on).
pub fn prune_model(
    model: &mut fgs_core::model::FactorModel,
    alpha: f32,
) -> Result<(usize, usize), CliError> {
    if !alpha.is_finite() {
        return Err(CliError::Usage(format!(
            "opacity floor must be finite, got {alpha}"
        )));
    }
    let scene = prepare(model)?;
    let mut binary = model.masks.binary()?;
    let unit_sides = model.unit_resolutions();
    let mut dropped = 0usize;
    for (row, &g) in scene.rows.iter().enumerate() {
        if scene.decoded.opacity[row] < alpha {
            let origin = scene.expanded.origins[g];
            let unit = model.unit_index(origin);
            let cell = fgs_core::factor::grid_index(
                unit_sides[unit],
                origin.i as usize,
                origin.j as usize,
                origin.k as usize,
            );
            if binary[unit][cell] != 0.0 {
                binary[unit][cell] = 0.0;
                dropped += 1;
            }
        }
    }
    let resolutions = model.masks.resolutions();
    let packed = resolutions
        .iter()
        .zip(&binary)
        .map(|(&n, b)| PackedMask {
            resolution: n,
            bits: pack_bits(b),
        })
        .collect();
    model.masks.state = MaskState::Frozen(packed);
    let (_, active) = model.masks.occupancy()?;
    Ok((dropped, active))
}

/// Runs the prune subcommand.
pub fn run_prune(args: &PruneArgs) -> Result<(), CliError> {
    let mut model = load_model_file(&args.model)?;
    let (_, before) = model.masks.occupancy()?;
    let (dropped, after) = prune_model(&mut model, args.alpha)?;
    save_model_file(&model, &args.out)?;
    println!(
        "switched off {dropped} of {before} active cells (opacity < {}); {after} remain -> {}",
        args.alpha,
        args.out.display()
    );
    Ok(())
}

/// Runs the report subcommand.
pub fn run_report(args: &ReportArgs) -> Result<(), CliError> {
    let model = load_model_file(&args.model)?;
    let report = model.storage_report()?;
    let scheme = match model.scheme {
        Scheme::Cp => "cp",
        Scheme::Vm => "vm",
    };
    if args.json {
        let json = serde_json::json!({
            "scheme": scheme,
            "blocks": report.blocks,
            "stored_coordinate_scalars": report.stored_coordinate_scalars,
            "stored_attribute_scalars": report.stored_attribute_scalars,
            "decoder_parameters": report.decoder_parameters,
            // Serialized as a string: the count is 128-bit.
            "representable_gaussians": report.representable_gaussians.to_string(),
            "active_gaussians": report.active_gaussians,
            "mask_cells": report.mask_cells,
            "compression_ratio": report.compression_ratio,
            "bytes_on_disk": report.bytes_on_disk,
        });
        println!(
            "{}",
            serde_json::to_string_pretty(&json)
                .map_err(|e| CliError::Data(format!("report serialization: {e}")))?
        );
    } else {
        println!("scheme                 {scheme}");
        println!("blocks                 {}", report.blocks);
        println!("coordinate scalars     {}", report.stored_coordinate_scalars);
        println!("attribute scalars      {}", report.stored_attribute_scalars);
        println!("decoder parameters     {}", report.decoder_parameters);
        println!("representable          {}", report.representable_gaussians);
        println!("active                 {}", report.active_gaussians);
        println!("mask cells             {}", report.mask_cells);
        println!("compression ratio      {:.6e}", report.compression_ratio);
        println!("bytes on disk          {}", report.bytes_on_disk);
    }
    Ok(())
}
