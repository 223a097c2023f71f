//! The complete factorized model: blocks, decoder and masks, plus storage
//! accounting and (de)serialization.

mod binary;
mod json;

pub use binary::{
    load_model, load_model_file, model_from_bytes, model_to_bytes, save_model, save_model_file,
    FORMAT_MAGIC, FORMAT_VERSION,
};
pub use json::dump_json;

use crate::decoder::Decoder;
use crate::error::CoreError;
use crate::factor::{
    expand_multi_set, expand_vm_multi_set, grid_index, CpBlock, VmBlock, VmMode,
};
use crate::gaussians::{ExpandedGaussians, ExpansionRaw, GaussianOrigin};
use crate::mask::{MaskSet, MaskState, DEFAULT_MASK_INIT};

/// Which factorization a model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Cp,
    Vm,
}

impl Scheme {
    pub fn code(self) -> u8 {
        match self {
            Scheme::Cp => 0,
            Scheme::Vm => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self, CoreError> {
        match code {
            0 => Ok(Scheme::Cp),
            1 => Ok(Scheme::Vm),
            other => Err(CoreError::Format(format!("unknown scheme tag {other}"))),
        }
    }
}

/// The factor blocks of a model, matching its scheme.
#[derive(Debug, Clone, PartialEq)]
pub enum Blocks {
    Cp(Vec<CpBlock>),
    Vm(Vec<VmBlock>),
}

impl Blocks {
    pub fn len(&self) -> usize {
        match self {
            Blocks::Cp(b) => b.len(),
            Blocks::Vm(b) => b.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn resolutions(&self) -> Vec<usize> {
        match self {
            Blocks::Cp(b) => b.iter().map(|x| x.resolution).collect(),
            Blocks::Vm(b) => b.iter().map(|x| x.resolution).collect(),
        }
    }
}

/// What role a parameter array plays; decides its learning rate and
/// whether the coordinate freeze applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Coordinate,
    Attribute,
    Decoder,
    Mask,
}

/// A full factorized scene model.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub scheme: Scheme,
    pub vm_mode: VmMode,
    pub feature_dim: usize,
    pub blocks: Blocks,
    pub decoder: Decoder,
    pub masks: MaskSet,
}

impl FactorModel {
    /// Assembles a CP model with fresh trainable masks (one grid per
    /// block, everything switched on).
    pub fn new_cp(
        blocks: Vec<CpBlock>,
        decoder: Decoder,
        mask_threshold: f32,
    ) -> Result<Self, CoreError> {
        let resolutions: Vec<usize> = blocks.iter().map(|b| b.resolution).collect();
        let feature_dim = blocks.first().map(|b| b.feature_dim).unwrap_or(0);
        let model = Self {
            scheme: Scheme::Cp,
            vm_mode: VmMode::PerTermProduct,
            feature_dim,
            blocks: Blocks::Cp(blocks),
            decoder,
            masks: MaskSet::training(&resolutions, DEFAULT_MASK_INIT, mask_threshold),
        };
        model.validate()?;
        Ok(model)
    }

    /// Assembles a VM model with fresh trainable masks: one grid per block
    /// in shared-grid mode, three per block (one per term) otherwise.
    pub fn new_vm(
        blocks: Vec<VmBlock>,
        mode: VmMode,
        decoder: Decoder,
        mask_threshold: f32,
    ) -> Result<Self, CoreError> {
        let mut unit_res = Vec::new();
        for b in &blocks {
            let per_block = match mode {
                VmMode::SharedGridSum => 1,
                VmMode::PerTermProduct => 3,
            };
            unit_res.extend(std::iter::repeat(b.resolution).take(per_block));
        }
        let feature_dim = blocks.first().map(|b| b.feature_dim).unwrap_or(0);
        let model = Self {
            scheme: Scheme::Vm,
            vm_mode: mode,
            feature_dim,
            blocks: Blocks::Vm(blocks),
            decoder,
            masks: MaskSet::training(&unit_res, DEFAULT_MASK_INIT, mask_threshold),
        };
        model.validate()?;
        Ok(model)
    }

    /// Structural checks: at least one block, consistent feature
    /// dimensions, valid blocks, a decoder matching the scheme (one hidden
    /// layer for CP, two for VM) and the feature dimension, and one mask
    /// unit per expansion grid.
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.blocks.is_empty() {
            return Err(CoreError::InvalidModel("model has no blocks".into()));
        }
        match &self.blocks {
            Blocks::Cp(blocks) => {
                for b in blocks {
                    b.validate()?;
                    if b.feature_dim != self.feature_dim {
                        return Err(CoreError::InvalidModel(format!(
                            "block feature dimension {} differs from model's {}",
                            b.feature_dim, self.feature_dim
                        )));
                    }
                }
                if self.decoder.layers.len() != 2 {
                    return Err(CoreError::InvalidModel(format!(
                        "CP decoder must have one hidden layer, found {} layers",
                        self.decoder.layers.len()
                    )));
                }
            }
            Blocks::Vm(blocks) => {
                for b in blocks {
                    b.validate()?;
                    if b.feature_dim != self.feature_dim {
                        return Err(CoreError::InvalidModel(format!(
                            "block feature dimension {} differs from model's {}",
                            b.feature_dim, self.feature_dim
                        )));
                    }
                }
                if self.decoder.layers.len() != 3 {
                    return Err(CoreError::InvalidModel(format!(
                        "VM decoder must have two hidden layers, found {} layers",
                        self.decoder.layers.len()
                    )));
                }
            }
        }
        self.decoder.validate()?;
        if self.decoder.input_dim() != self.feature_dim {
            return Err(CoreError::InvalidModel(format!(
                "decoder input {} does not match feature dimension {}",
                self.decoder.input_dim(),
                self.feature_dim
            )));
        }
        let expect_units = self.unit_resolutions();
        if self.masks.resolutions() != expect_units {
            return Err(CoreError::InvalidModel(format!(
                "mask units {:?} do not match expansion grids {:?}",
                self.masks.resolutions(),
                expect_units
            )));
        }
        Ok(())
    }

    /// Resolutions of the mask/expansion units in expansion order. CP and
    /// shared-grid VM have one unit per block; per-term VM has three.
    pub fn unit_resolutions(&self) -> Vec<usize> {
        match (&self.blocks, self.vm_mode) {
            (Blocks::Cp(blocks), _) => blocks.iter().map(|b| b.resolution).collect(),
            (Blocks::Vm(blocks), VmMode::SharedGridSum) => {
                blocks.iter().map(|b| b.resolution).collect()
            }
            (Blocks::Vm(blocks), VmMode::PerTermProduct) => blocks
                .iter()
                .flat_map(|b| std::iter::repeat(b.resolution).take(3))
                .collect(),
        }
    }

    /// Index of the mask unit an expanded Gaussian belongs to.
    pub fn unit_index(&self, origin: GaussianOrigin) -> usize {
        match (self.scheme, self.vm_mode) {
            (Scheme::Cp, _) | (Scheme::Vm, VmMode::SharedGridSum) => origin.block as usize,
            (Scheme::Vm, VmMode::PerTermProduct) => {
                origin.block as usize * 3 + origin.term as usize
            }
        }
    }

    /// Total number of Gaussians the model expands to.
    pub fn gaussian_count(&self) -> u128 {
        match &self.blocks {
            Blocks::Cp(blocks) => blocks.iter().map(|b| (b.resolution as u128).pow(3)).sum(),
            Blocks::Vm(blocks) => {
                let per_term: u128 =
                    blocks.iter().map(|b| (b.resolution as u128).pow(3)).sum();
                match self.vm_mode {
                    VmMode::SharedGridSum => per_term,
                    VmMode::PerTermProduct => 3 * per_term,
                }
            }
        }
    }

    /// Expands every block into one renderable Gaussian set.
    pub fn expand(&self) -> Result<(ExpandedGaussians, ExpansionRaw), CoreError> {
        match &self.blocks {
            Blocks::Cp(blocks) => expand_multi_set(blocks),
            Blocks::Vm(blocks) => expand_vm_multi_set(blocks, self.vm_mode),
        }
    }

    /// Per-Gaussian binary mask values gathered from the unit grids.
    pub fn gather_mask(&self, origins: &[GaussianOrigin]) -> Result<Vec<f32>, CoreError> {
        let binaries = self.masks.binary()?;
        let resolutions = self.unit_resolutions();
        let mut out = Vec::with_capacity(origins.len());
        for &origin in origins {
            let unit = self.unit_index(origin);
            let n = resolutions[unit];
            let cell = grid_index(n, origin.i as usize, origin.j as usize, origin.k as usize);
            out.push(binaries[unit][cell]);
        }
        Ok(out)
    }

    /// All trainable parameter arrays with their roles, in a fixed order:
    /// per block its factor arrays (coordinates first), then decoder
    /// weights and biases, then mask grids (when trainable). Gradient
    /// containers and optimizer states follow this same order.
    pub fn param_arrays_mut(&mut self) -> Vec<(ParamKind, &mut Vec<f32>)> {
        let mut out: Vec<(ParamKind, &mut Vec<f32>)> = Vec::new();
        match &mut self.blocks {
            Blocks::Cp(blocks) => {
                for block in blocks {
                    for (idx, arr) in block.arrays_mut().into_iter().enumerate() {
                        let kind = if idx < 3 { ParamKind::Coordinate } else { ParamKind::Attribute };
                        out.push((kind, arr));
                    }
                }
            }
            Blocks::Vm(blocks) => {
                for block in blocks {
                    for (idx, arr) in block.arrays_mut().into_iter().enumerate() {
                        let kind = if idx < 6 { ParamKind::Coordinate } else { ParamKind::Attribute };
                        out.push((kind, arr));
                    }
                }
            }
        }
        for arr in self.decoder.arrays_mut() {
            out.push((ParamKind::Decoder, arr));
        }
        if let MaskState::Training(grids) = &mut self.masks.state {
            for grid in grids {
                out.push((ParamKind::Mask, &mut grid.values));
            }
        }
        out
    }

    /// Storage accounting for reports and the CLI.
    pub fn storage_report(&self) -> Result<StorageReport, CoreError> {
        let (mut coords, mut attrs) = (0u64, 0u64);
        match &self.blocks {
            Blocks::Cp(blocks) => {
                for b in blocks {
                    let (c, a) = b.param_counts();
                    coords += c;
                    attrs += a;
                }
            }
            Blocks::Vm(blocks) => {
                for b in blocks {
                    let (c, a) = b.param_counts();
                    coords += c;
                    attrs += a;
                }
            }
        }
        let representable = self.gaussian_count();
        let (mask_cells, active_cells) = self.masks.occupancy()?;
        let bytes_on_disk = binary::serialized_len(self)?;
        Ok(StorageReport {
            blocks: self.blocks.len(),
            stored_coordinate_scalars: coords,
            stored_attribute_scalars: attrs,
            decoder_parameters: self.decoder.param_count(),
            representable_gaussians: representable,
            active_gaussians: active_cells as u64,
            mask_cells: mask_cells as u64,
            compression_ratio: coords as f64 / (3.0 * representable as f64),
            bytes_on_disk,
        })
    }
}

/// Storage summary of a model.
///
/// `compression_ratio` compares stored coordinate scalars against the
/// `3 * representable_gaussians` scalars a dense point list would need;
/// a single CP block of resolution N gives exactly `1 / N^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct StorageReport {
    pub blocks: usize,
    pub stored_coordinate_scalars: u64,
    pub stored_attribute_scalars: u64,
    pub decoder_parameters: u64,
    pub representable_gaussians: u128,
    pub active_gaussians: u64,
    pub mask_cells: u64,
    pub compression_ratio: f64,
    pub bytes_on_disk: u64,
}

impl StorageReport {
    /// Factor scalars stored per block grid (coordinates plus attributes),
    /// excluding the shared decoder.
    pub fn stored_factor_scalars(&self) -> u64 {
        self.stored_coordinate_scalars + self.stored_attribute_scalars
    }
}
