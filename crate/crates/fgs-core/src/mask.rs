//! Trainable binary masks over expansion grid cells.
//!
//! Every expansion unit (a CP block, a VM shared grid, or one VM term
//! grid) carries an `N^3` grid of real mask parameters. The forward pass
//! hard-thresholds them to {0, 1} and multiplies the binary value into the
//! Gaussian's scales and opacity; the backward pass routes gradients
//! through a sigmoid surrogate (straight-through estimator). A sparsity
//! loss `sum sigmoid(value)` pushes mask parameters negative so cells
//! switch off, and switched-off cells can be pruned without changing the
//! rendered image. Frozen masks store one bit per cell.

use crate::error::CoreError;
use crate::math::{sigmoid, sigmoid_grad};

/// Default binarization threshold.
pub const DEFAULT_TAU: f32 = 0.01;
/// Default initial value for real mask parameters (binarizes to 1).
pub const DEFAULT_MASK_INIT: f32 = 0.1;

/// Hard-thresholds real mask values: 1 where `value - tau >= 0`, else 0.
/// The boundary maps to 1.
pub fn binarize_ste(values: &[f32], tau: f32) -> Vec<f32> {
    values.iter().map(|&v| if v - tau >= 0.0 { 1.0 } else { 0.0 }).collect()
}

/// Straight-through backward: the hard threshold is treated as the sigmoid
/// of the mask value, so each entry receives
/// `grad_binary * sigmoid'(value)`.
pub fn ste_backward(values: &[f32], grad_binary: &[f32]) -> Result<Vec<f32>, CoreError> {
    if values.len() != grad_binary.len() {
        return Err(CoreError::ShapeMismatch(format!(
            "mask has {} entries, gradient has {}",
            values.len(),
            grad_binary.len()
        )));
    }
    Ok(values
        .iter()
        .zip(grad_binary)
        .map(|(&v, &g)| g * sigmoid_grad(v))
        .collect())
}

/// Sparsity loss of one mask grid: the sum of sigmoids of the real values.
pub fn mask_loss(values: &[f32]) -> f64 {
    values.iter().map(|&v| f64::from(sigmoid(v))).sum()
}

/// Gradient of [`mask_loss`] with respect to each real mask value.
pub fn mask_loss_grad(values: &[f32]) -> Vec<f32> {
    values.iter().map(|&v| sigmoid_grad(v)).collect()
}

/// Multiplies a per-Gaussian binary mask into scales and opacities in
/// place. Masked-out Gaussians end up with zero scale and zero opacity;
/// they stop contributing to renders but still occupy a slot until pruned.
pub fn apply_mask(
    scales: &mut [[f32; 3]],
    opacities: &mut [f32],
    mask: &[f32],
) -> Result<(), CoreError> {
    if scales.len() != mask.len() || opacities.len() != mask.len() {
        return Err(CoreError::ShapeMismatch(format!(
            "mask covers {} Gaussians, got {} scales / {} opacities",
            mask.len(),
            scales.len(),
            opacities.len()
        )));
    }
    for g in 0..mask.len() {
        let m = mask[g];
        for c in 0..3 {
            scales[g][c] *= m;
        }
        opacities[g] *= m;
    }
    Ok(())
}

/// Indices of Gaussians that survive pruning: mask nonzero and opacity at
/// least `alpha_min`.
pub fn survivors(mask: &[f32], opacities: &[f32], alpha_min: f32) -> Result<Vec<usize>, CoreError> {
    if mask.len() != opacities.len() {
        return Err(CoreError::ShapeMismatch(format!(
            "mask covers {} Gaussians, got {} opacities",
            mask.len(),
            opacities.len()
        )));
    }
    Ok((0..mask.len())
        .filter(|&g| mask[g] != 0.0 && opacities[g] >= alpha_min)
        .collect())
}

/// Packs binary mask values into bytes, least-significant bit first: cell
/// `g` occupies bit `g % 8` of byte `g / 8`. Trailing bits of the last
/// byte are zero.
pub fn pack_bits(binary: &[f32]) -> Vec<u8> {
    let mut bytes = vec![0u8; binary.len().div_ceil(8)];
    for (g, &v) in binary.iter().enumerate() {
        if v >= 0.5 {
            bytes[g / 8] |= 1 << (g % 8);
        }
    }
    bytes
}

/// Unpacks `count` binary values from a bit field produced by
/// [`pack_bits`]. The byte length must be exactly `ceil(count / 8)`.
pub fn unpack_bits(bytes: &[u8], count: usize) -> Result<Vec<f32>, CoreError> {
    if bytes.len() != count.div_ceil(8) {
        return Err(CoreError::ShapeMismatch(format!(
            "bit field holds {} bytes, expected {} for {count} cells",
            bytes.len(),
            count.div_ceil(8)
        )));
    }
    Ok((0..count)
        .map(|g| if bytes[g / 8] >> (g % 8) & 1 == 1 { 1.0 } else { 0.0 })
        .collect())
}

/// Real-valued mask grid for one expansion unit.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskGrid {
    pub resolution: usize,
    pub values: Vec<f32>,
}

impl MaskGrid {
    pub fn uniform(resolution: usize, value: f32) -> Self {
        Self {
            resolution,
            values: vec![value; resolution * resolution * resolution],
        }
    }
}

/// Frozen 1-bit mask grid for one expansion unit.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedMask {
    pub resolution: usize,
    pub bits: Vec<u8>,
}

impl PackedMask {
    pub fn cell_count(&self) -> usize {
        self.resolution * self.resolution * self.resolution
    }
}

/// Mask parameters for a whole model: one grid per expansion unit, either
/// trainable reals or frozen bits.
#[derive(Debug, Clone, PartialEq)]
pub enum MaskState {
    Training(Vec<MaskGrid>),
    Frozen(Vec<PackedMask>),
}

/// All masks of a model plus the shared binarization threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    pub threshold: f32,
    pub state: MaskState,
}

impl MaskSet {
    /// Fresh trainable masks, one grid per unit resolution, every value at
    /// `init`.
    pub fn training(resolutions: &[usize], init: f32, threshold: f32) -> Self {
        Self {
            threshold,
            state: MaskState::Training(
                resolutions.iter().map(|&n| MaskGrid::uniform(n, init)).collect(),
            ),
        }
    }

    /// Frozen masks with every cell switched on, one per unit resolution.
    /// Packed form only, so huge grids stay at one bit per cell.
    pub fn frozen_full(resolutions: &[usize], threshold: f32) -> Self {
        let packed = resolutions
            .iter()
            .map(|&n| {
                let cells = n * n * n;
                let mut bits = vec![0xFFu8; cells.div_ceil(8)];
                if cells % 8 != 0 {
                    // Trailing bits beyond the cell count stay zero.
                    *bits.last_mut().expect("at least one byte") = (1u8 << (cells % 8)) - 1;
                }
                PackedMask {
                    resolution: n,
                    bits,
                }
            })
            .collect();
        Self {
            threshold,
            state: MaskState::Frozen(packed),
        }
    }

    pub fn unit_count(&self) -> usize {
        match &self.state {
            MaskState::Training(grids) => grids.len(),
            MaskState::Frozen(packed) => packed.len(),
        }
    }

    pub fn resolutions(&self) -> Vec<usize> {
        match &self.state {
            MaskState::Training(grids) => grids.iter().map(|g| g.resolution).collect(),
            MaskState::Frozen(packed) => packed.iter().map(|p| p.resolution).collect(),
        }
    }

    /// Binary mask values per unit, regardless of state.
    pub fn binary(&self) -> Result<Vec<Vec<f32>>, CoreError> {
        match &self.state {
            MaskState::Training(grids) => Ok(grids
                .iter()
                .map(|g| binarize_ste(&g.values, self.threshold))
                .collect()),
            MaskState::Frozen(packed) => packed
                .iter()
                .map(|p| unpack_bits(&p.bits, p.cell_count()))
                .collect(),
        }
    }

    /// Converts trainable masks to packed bits; a no-op when already
    /// frozen.
    pub fn freeze(&mut self) {
        if let MaskState::Training(grids) = &self.state {
            let packed = grids
                .iter()
                .map(|g| PackedMask {
                    resolution: g.resolution,
                    bits: pack_bits(&binarize_ste(&g.values, self.threshold)),
                })
                .collect();
            self.state = MaskState::Frozen(packed);
        }
    }

    /// Converts frozen masks back to trainable reals: set bits become
    /// `hi`, cleared bits `lo`. `hi` must binarize back to 1 and `lo` to 0
    /// so freeze/thaw round-trips exactly. A no-op when already training.
    pub fn thaw(&mut self, hi: f32, lo: f32) -> Result<(), CoreError> {
        if hi - self.threshold < 0.0 || lo - self.threshold >= 0.0 {
            return Err(CoreError::InvalidArgument(format!(
                "thaw values must straddle the threshold {}: hi {hi}, lo {lo}",
                self.threshold
            )));
        }
        if let MaskState::Frozen(packed) = &self.state {
            let grids = packed
                .iter()
                .map(|p| {
                    let bits = unpack_bits(&p.bits, p.cell_count())?;
                    Ok(MaskGrid {
                        resolution: p.resolution,
                        values: bits.iter().map(|&b| if b >= 0.5 { hi } else { lo }).collect(),
                    })
                })
                .collect::<Result<Vec<_>, CoreError>>()?;
            self.state = MaskState::Training(grids);
        }
        Ok(())
    }

    /// Total cells across units and how many are switched on.
    pub fn occupancy(&self) -> Result<(usize, usize), CoreError> {
        let mut total = 0;
        let mut active = 0;
        match &self.state {
            MaskState::Training(grids) => {
                for g in grids {
                    total += g.values.len();
                    active += g.values.iter().filter(|&&v| v - self.threshold >= 0.0).count();
                }
            }
            // Trailing pad bits are guaranteed zero, so a popcount over
            // the raw bytes is exact and avoids unpacking huge grids.
            MaskState::Frozen(packed) => {
                for p in packed {
                    total += p.cell_count();
                    active += p.bits.iter().map(|b| b.count_ones() as usize).sum::<usize>();
                }
            }
        }
        Ok((total, active))
    }
}
