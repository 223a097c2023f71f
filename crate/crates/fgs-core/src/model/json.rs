//! Human-readable JSON dump of a model for inspection and debugging.
//!
//! The dump mirrors the binary layout: every factor array, decoder layer
//! and mask cell appears verbatim (floats are printed with round-trip
//! precision), so diffs between dumps show exactly which parameters moved.

use std::io::Write;

use serde::Serialize;

use crate::error::CoreError;
use crate::mask::MaskState;
use crate::model::{Blocks, FactorModel, Scheme};

#[derive(Serialize)]
struct ModelDump<'a> {
    scheme: &'static str,
    vm_mode: &'static str,
    feature_dim: usize,
    mask_threshold: f32,
    blocks: Vec<BlockDump<'a>>,
    decoder: Vec<LayerDump<'a>>,
    masks: Vec<MaskDump>,
}

#[derive(Serialize)]
struct BlockDump<'a> {
    resolution: usize,
    arrays: Vec<ArrayDump<'a>>,
}

#[derive(Serialize)]
struct ArrayDump<'a> {
    name: &'static str,
    values: &'a [f32],
}

#[derive(Serialize)]
struct LayerDump<'a> {
    in_dim: usize,
    out_dim: usize,
    weight: &'a [f32],
    bias: &'a [f32],
}

#[derive(Serialize)]
struct MaskDump {
    resolution: usize,
    frozen: bool,
    cells: Vec<u8>,
}

const CP_ARRAY_NAMES: [&str; 12] = [
    "coord_x", "coord_y", "coord_z", "scale_x", "scale_y", "scale_z", "rot_x", "rot_y", "rot_z",
    "feat_x", "feat_y", "feat_z",
];

const VM_ARRAY_NAMES: [&str; 18] = [
    "plane_xy", "plane_yz", "plane_xz", "line_x", "line_y", "line_z", "feat_xy", "feat_yz",
    "feat_xz", "feat_x", "feat_y", "feat_z", "scale_x", "scale_y", "scale_z", "rot_x", "rot_y",
    "rot_z",
];

/// Writes the model as pretty-printed JSON.
pub fn dump_json<W: Write>(model: &FactorModel, w: W) -> Result<(), CoreError> {
    model.validate()?;
    let blocks = match &model.blocks {
        Blocks::Cp(blocks) => blocks
            .iter()
            .map(|b| BlockDump {
                resolution: b.resolution,
                arrays: b
                    .arrays()
                    .into_iter()
                    .zip(CP_ARRAY_NAMES)
                    .map(|(values, name)| ArrayDump {
                        name,
                        values,
                    })
                    .collect(),
            })
            .collect(),
        Blocks::Vm(blocks) => blocks
            .iter()
            .map(|b| BlockDump {
                resolution: b.resolution,
                arrays: b
                    .arrays()
                    .into_iter()
                    .zip(VM_ARRAY_NAMES)
                    .map(|(values, name)| ArrayDump {
                        name,
                        values,
                    })
                    .collect(),
            })
            .collect(),
    };
    let decoder = model
        .decoder
        .layers
        .iter()
        .map(|l| LayerDump {
            in_dim: l.in_dim,
            out_dim: l.out_dim,
            weight: &l.weight,
            bias: &l.bias,
        })
        .collect();
    let frozen = matches!(model.masks.state, MaskState::Frozen(_));
    let masks = model
        .masks
        .binary()?
        .into_iter()
        .zip(model.unit_resolutions())
        .map(|(cells, resolution)| MaskDump {
            resolution,
            frozen,
            cells: cells.into_iter().map(|b| if b >= 0.5 { 1 } else { 0 }).collect(),
        })
        .collect();
    let dump = ModelDump {
        scheme: match model.scheme {
            Scheme::Cp => "cp",
            Scheme::Vm => "vm",
        },
        vm_mode: match model.vm_mode {
            crate::factor::VmMode::PerTermProduct => "per-term-product",
            crate::factor::VmMode::SharedGridSum => "shared-grid-sum",
        },
        feature_dim: model.feature_dim,
        mask_threshold: model.masks.threshold,
        blocks,
        decoder,
        masks,
    };
    serde_json::to_writer_pretty(w, &dump)
        .map_err(|e| CoreError::Format(format!("json dump failed: {e}")))?;
    Ok(())
}
