//! Differentiable path from factor arrays to a rendered frame.
//!
//! The forward direction expands every block, gathers binary masks,
//! decodes appearance for the surviving rows and hands the result to the
//! renderer. The backward direction retraces that path: splat gradients
//! are pulled through the projection, scattered onto the expanded set,
//! chained through the scale floor and quaternion normalization, pushed
//! through the decoder, and finally folded onto the factor arrays in the
//! same order [`FactorModel::param_arrays_mut`] exposes them.
//!
//! Masked-off gaussians never reach the renderer, so their only training
//! signal is the sparsity regularizer the trainer adds on top. Rows that
//! do render feed their mask cell the product rule term: the mask scales
//! both the per-axis extents and the opacity, so its gradient collects
//! `grad_scale . scale + grad_opacity * opacity`.

use fgs_core::decoder::{decode, decode_backward, Decoded};
use fgs_core::factor::{
    backprop_cp_expansion, backprop_vm_expansion, grid_index, ExpansionGrads,
};
use fgs_core::gaussians::{sanitize_scale_grad, ExpandedGaussians, ExpansionRaw};
use fgs_core::mask::{ste_backward, MaskState};
use fgs_core::math::quat_normalize_backward;
use fgs_core::model::{Blocks, FactorModel};
use fgs_core::sh::SH_COEFFS;
use fgs_render::{
    project_backward, project_gaussians, rasterize, rasterize_backward, Camera, GaussianInput,
    RasterizeOptions, RenderOutput, Splat,
};

use crate::config::TrainConfig;
use crate::error::TrainError;

/// Rendering knobs shared by training and evaluation.
#[derive(Debug, Clone, Copy)]
pub struct RenderSettings {
    /// Color composited where transmittance remains.
    pub background: [f32; 3],
    /// Blended contribution below which a splat or pixel pair is skipped.
    pub alpha_cutoff: f32,
    /// Side length of rasterizer tiles, in pixels.
    pub tile_size: usize,
    /// Transmittance below which blending stops early.
    pub transmittance_floor: f32,
}

impl Default for RenderSettings {
    fn default() -> Self {
        let raster = RasterizeOptions::default();
        Self {
            background: [1.0, 1.0, 1.0],
            alpha_cutoff: raster.alpha_cutoff,
            tile_size: raster.tile_size,
            transmittance_floor: raster.transmittance_floor,
        }
    }
}

impl RenderSettings {
    /// Pulls the rendering knobs out of a train config.
    pub fn from_config(config: &TrainConfig) -> Self {
        Self {
            background: config.background,
            alpha_cutoff: config.alpha_cutoff,
            tile_size: config.tile_size,
            transmittance_floor: config.transmittance_floor,
        }
    }

    /// The rasterizer-facing subset of these settings.
    pub fn raster_options(&self) -> RasterizeOptions {
        RasterizeOptions {
            tile_size: self.tile_size,
            alpha_cutoff: self.alpha_cutoff,
            transmittance_floor: self.transmittance_floor,
        }
    }
}

/// View-independent products of one model evaluation: the expanded
/// gaussian set, its mask, and decoded appearance for the rows the mask
/// keeps. `rows[i]` is the expanded index behind `inputs[i]`.
#[derive(Debug, Clone)]
pub struct PreparedScene {
    pub expanded: ExpandedGaussians,
    pub raw: ExpansionRaw,
    pub mask: Vec<f32>,
    pub rows: Vec<usize>,
    pub features: Vec<f32>,
    pub decoded: Decoded,
    pub inputs: Vec<GaussianInput>,
}

impl PreparedScene {
    /// Number of gaussians that survive masking and may render.
    pub fn active(&self) -> usize {
        self.inputs.len()
    }
}

/// Expands, masks and decodes a model. Everything here depends only on
/// the parameters, not on any camera.
pub fn prepare(model: &FactorModel) -> Result<PreparedScene, TrainError> {
    let (expanded, raw) = model.expand()?;
    let mask = model.gather_mask(&expanded.origins)?;
    let d = expanded.feature_dim;

    let rows: Vec<usize> = mask
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > 0.5)
        .map(|(g, _)| g)
        .collect();
    let mut features = Vec::with_capacity(rows.len() * d);
    for &g in &rows {
        features.extend_from_slice(&expanded.features[g * d..(g + 1) * d]);
    }
    let decoded = decode(&features, d, &model.decoder)?;

    let mut inputs = Vec::with_capacity(rows.len());
    for (row, &g) in rows.iter().enumerate() {
        let mut sh = [0.0f32; SH_COEFFS];
        sh.copy_from_slice(&decoded.sh[row * SH_COEFFS..(row + 1) * SH_COEFFS]);
        inputs.push(GaussianInput {
            // The mask multiplies scales and opacity; surviving rows have
            // mask one, so the sanitized scale and decoded opacity pass
            // through unchanged.
            position: expanded.positions[g],
            scale: expanded.scales[g],
            rotation: expanded.rotations[g],
            sh,
            opacity: decoded.opacity[row],
        });
    }
    Ok(PreparedScene {
        expanded,
        raw,
        mask,
        rows,
        features,
        decoded,
        inputs,
    })
}

/// Projects and rasterizes a prepared scene for one camera. The returned
/// splats are depth sorted and reference `scene.inputs` via their
/// `source` field.
pub fn render_view(
    scene: &PreparedScene,
    camera: &Camera,
    settings: &RenderSettings,
) -> Result<(Vec<Splat>, RenderOutput), TrainError> {
    let mut splats = project_gaussians(&scene.inputs, camera, settings.alpha_cutoff)?;
    let output = rasterize(
        &mut splats,
        camera.width,
        camera.height,
        settings.background,
        &settings.raster_options(),
    )?;
    Ok((splats, output))
}

/// One full forward evaluation for a single view.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub scene: PreparedScene,
    pub splats: Vec<Splat>,
    pub output: RenderOutput,
}

/// Runs [`prepare`] and [`render_view`] in one call.
pub fn forward(
    model: &FactorModel,
    camera: &Camera,
    settings: &RenderSettings,
) -> Result<ForwardPass, TrainError> {
    let scene = prepare(model)?;
    let (splats, output) = render_view(&scene, camera, settings)?;
    Ok(ForwardPass {
        scene,
        splats,
        output,
    })
}

/// Gradients for every trainable array, in the exact order of
/// [`FactorModel::param_arrays_mut`].
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub arrays: Vec<Vec<f32>>,
}

impl ModelGrads {
    /// Adds `weight * other` element-wise; shapes must match.
    pub fn accumulate(&mut self, other: &ModelGrads, weight: f32) -> Result<(), TrainError> {
        if self.arrays.len() != other.arrays.len() {
            return Err(TrainError::ShapeMismatch(format!(
                "gradient sets hold {} vs {} arrays",
                self.arrays.len(),
                other.arrays.len()
            )));
        }
        for (mine, theirs) in self.arrays.iter_mut().zip(&other.arrays) {
            if mine.len() != theirs.len() {
                return Err(TrainError::ShapeMismatch(format!(
                    "gradient arrays hold {} vs {} values",
                    mine.len(),
                    theirs.len()
                )));
            }
            for (m, t) in mine.iter_mut().zip(theirs) {
                *m += weight * t;
            }
        }
        Ok(())
    }
}

/// Pulls an image gradient back onto every trainable array of `model`.
///
/// `pass` must come from [`forward`] on the same model and camera, and
/// `grad_image` holds the loss derivative for each rendered channel.
/// The returned mask gradients cover only the rendering path; sparsity
/// regularization is the trainer's business.
pub fn backward(
    model: &FactorModel,
    pass: &ForwardPass,
    camera: &Camera,
    settings: &RenderSettings,
    grad_image: &[f32],
) -> Result<ModelGrads, TrainError> {
    let scene = &pass.scene;
    let d = scene.expanded.feature_dim;
    let total = scene.expanded.len();
    if scene.mask.len() != total || scene.decoded.opacity.len() != scene.rows.len() {
        return Err(TrainError::ShapeMismatch(
            "forward pass holds inconsistent buffers".into(),
        ));
    }

    let splat_grads = rasterize_backward(
        &pass.splats,
        camera.width,
        camera.height,
        settings.background,
        &settings.raster_options(),
        grad_image,
    )?;

    // Per-gaussian gradients over the full expansion; rows that were
    // masked off or culled stay zero.
    let mut g_positions = vec![[0.0f32; 3]; total];
    let mut g_scales_raw = vec![[0.0f32; 3]; total];
    let mut g_rotations_raw = vec![[0.0f32; 4]; total];
    let mut g_features = vec![0.0f32; total * d];
    let mut g_sh = vec![0.0f32; scene.rows.len() * SH_COEFFS];
    let mut g_opacity = vec![0.0f32; scene.rows.len()];

    // Mask gradients are gathered per unit grid in binarized space and
    // translated through the sigmoid surrogate afterwards.
    let train_masks = matches!(model.masks.state, MaskState::Training(_));
    let resolutions = model.unit_resolutions();
    let mut g_mask_binary: Vec<Vec<f32>> = if train_masks {
        resolutions.iter().map(|&n| vec![0.0f32; n * n * n]).collect()
    } else {
        Vec::new()
    };

    for (slot, splat) in pass.splats.iter().enumerate() {
        let input_idx = splat.source as usize;
        let input = scene.inputs.get(input_idx).ok_or_else(|| {
            TrainError::ShapeMismatch(format!(
                "splat references input {input_idx} of {}",
                scene.inputs.len()
            ))
        })?;
        let got = project_backward(
            input,
            camera,
            splat,
            splat_grads.mean2d[slot],
            splat_grads.conic[slot],
            splat_grads.rgb[slot],
            splat_grads.opacity[slot],
        );
        let g = scene.rows[input_idx];

        g_positions[g] = got.position;
        let raw_scale = scene.raw.scales[g];
        for axis in 0..3 {
            g_scales_raw[g][axis] = got.scale[axis] * sanitize_scale_grad(raw_scale[axis]);
        }
        g_rotations_raw[g] = quat_normalize_backward(scene.raw.rotations[g], got.rotation);
        g_sh[input_idx * SH_COEFFS..(input_idx + 1) * SH_COEFFS].copy_from_slice(&got.sh);
        g_opacity[input_idx] = got.opacity;

        if train_masks {
            // The mask multiplies the three extents and the opacity, so
            // its slope is the dot of each gradient with the unmasked
            // value it scaled.
            let origin = scene.expanded.origins[g];
            let unit = model.unit_index(origin);
            let n = resolutions[unit];
            let cell = grid_index(n, origin.i as usize, origin.j as usize, origin.k as usize);
            let mut slope = got.opacity * scene.decoded.opacity[input_idx];
            for axis in 0..3 {
                slope += got.scale[axis] * scene.expanded.scales[g][axis];
            }
            g_mask_binary[unit][cell] += slope;
        }
    }

    let (g_feature_rows, decoder_grads) = decode_backward(
        &scene.features,
        d,
        &model.decoder,
        &g_sh,
        &g_opacity,
    )?;
    for (row, &g) in scene.rows.iter().enumerate() {
        g_features[g * d..(g + 1) * d].copy_from_slice(&g_feature_rows[row * d..(row + 1) * d]);
    }

    // Fold the dense per-gaussian gradients onto the factor arrays,
    // block by block, in parameter order.
    let mut arrays: Vec<Vec<f32>> = Vec::new();
    let mut offset = 0usize;
    match &model.blocks {
        Blocks::Cp(blocks) => {
            for block in blocks {
                let cells = block.cell_count();
                let grads = ExpansionGrads {
                    positions: &g_positions[offset..offset + cells],
                    scales: &g_scales_raw[offset..offset + cells],
                    rotations: &g_rotations_raw[offset..offset + cells],
                    features: &g_features[offset * d..(offset + cells) * d],
                };
                let block_grads = backprop_cp_expansion(block, &grads)?;
                arrays.extend(block_grads.arrays().into_iter().cloned());
                offset += cells;
            }
        }
        Blocks::Vm(blocks) => {
            for block in blocks {
                let cells = block.cell_count(model.vm_mode);
                let grads = ExpansionGrads {
                    positions: &g_positions[offset..offset + cells],
                    scales: &g_scales_raw[offset..offset + cells],
                    rotations: &g_rotations_raw[offset..offset + cells],
                    features: &g_features[offset * d..(offset + cells) * d],
                };
                let block_grads = backprop_vm_expansion(block, model.vm_mode, &grads)?;
                arrays.extend(block_grads.arrays().into_iter().cloned());
                offset += cells;
            }
        }
    }
    if offset != total {
        return Err(TrainError::ShapeMismatch(format!(
            "blocks cover {offset} gaussians, expansion holds {total}"
        )));
    }

    arrays.extend(decoder_grads.arrays().into_iter().cloned());

    if let MaskState::Training(grids) = &model.masks.state {
        for (grid, binary) in grids.iter().zip(&g_mask_binary) {
            arrays.push(ste_backward(&grid.values, binary)?);
        }
    }

    Ok(ModelGrads { arrays })
}
