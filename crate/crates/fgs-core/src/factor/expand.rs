//! Expansion of factor blocks into dense Gaussian sets.
//!
//! Products are evaluated left-to-right (`(x * y) * z`) and VM term sums
//! left-to-right (`(t0 + t1) + t2`), always iterating cells in row-major
//! order, so expansion is exactly reproducible and independent oracles can
//! match it bit for bit.

use crate::error::CoreError;
use crate::factor::{CpBlock, VmBlock, VmMode};
use crate::gaussians::{finalize_raw, ExpandedGaussians, ExpansionRaw, GaussianOrigin};

/// Row-major linear index of grid cell `(i, j, k)` at resolution `n`; the
/// z index varies fastest.
#[inline]
pub fn grid_index(n: usize, i: usize, j: usize, k: usize) -> usize {
    (i * n + j) * n + k
}

/// Component-wise triple product over three `n x comps` factor tables,
/// producing one `comps`-vector per grid cell.
fn triple_product<const C: usize>(n: usize, ax: &[f32], ay: &[f32], az: &[f32]) -> Vec<[f32; C]> {
    let mut out = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut row = [0.0f32; C];
                for (c, slot) in row.iter_mut().enumerate() {
                    *slot = (ax[i * C + c] * ay[j * C + c]) * az[k * C + c];
                }
                out.push(row);
            }
        }
    }
    out
}

/// Component-wise triple product for `d`-channel features, flat row-major.
fn triple_product_flat(n: usize, d: usize, ax: &[f32], ay: &[f32], az: &[f32]) -> Vec<f32> {
    let mut out = Vec::with_capacity(n * n * n * d);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for c in 0..d {
                    out.push((ax[i * d + c] * ay[j * d + c]) * az[k * d + c]);
                }
            }
        }
    }
    out
}

/// Positions of all `N^3` cells of a CP block: the cartesian product of the
/// three coordinate vectors.
pub fn expand_cp_coordinates(block: &CpBlock) -> Vec<[f32; 3]> {
    let n = block.resolution;
    let mut out = Vec::with_capacity(block.cell_count());
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                out.push([block.coord_x[i], block.coord_y[j], block.coord_z[k]]);
            }
        }
    }
    out
}

/// Raw per-cell scale products of a CP block (no sign or magnitude fixup).
pub fn expand_cp_scales_raw(block: &CpBlock) -> Vec<[f32; 3]> {
    triple_product::<3>(block.resolution, &block.scale_x, &block.scale_y, &block.scale_z)
}

/// Raw per-cell quaternion products of a CP block (not normalized).
pub fn expand_cp_rotations_raw(block: &CpBlock) -> Vec<[f32; 4]> {
    triple_product::<4>(block.resolution, &block.rot_x, &block.rot_y, &block.rot_z)
}

/// Per-cell feature products of a CP block, flat `N^3 x d` row-major.
pub fn expand_cp_features(block: &CpBlock) -> Vec<f32> {
    triple_product_flat(
        block.resolution,
        block.feature_dim,
        &block.feat_x,
        &block.feat_y,
        &block.feat_z,
    )
}

/// Positions of one VM term's grid in `PerTermProduct` mode. Terms are
/// numbered 0 = xy-plane with z-line, 1 = yz with x, 2 = xz with y.
pub fn expand_vm_term_coordinates(block: &VmBlock, term: usize) -> Vec<[f32; 3]> {
    let n = block.resolution;
    let mut out = Vec::with_capacity(block.cells_per_term());
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let p = match term {
                    0 => {
                        let base = (i * n + j) * 2;
                        [block.plane_xy[base], block.plane_xy[base + 1], block.line_z[k]]
                    }
                    1 => {
                        let base = (j * n + k) * 2;
                        [block.line_x[i], block.plane_yz[base], block.plane_yz[base + 1]]
                    }
                    2 => {
                        let base = (i * n + k) * 2;
                        [block.plane_xz[base], block.line_y[j], block.plane_xz[base + 1]]
                    }
                    other => panic!("VM term index {other} out of range"),
                };
                out.push(p);
            }
        }
    }
    out
}

/// Feature products of one VM term's grid, flat `N^3 x d` row-major.
pub fn expand_vm_term_features(block: &VmBlock, term: usize) -> Vec<f32> {
    let n = block.resolution;
    let d = block.feature_dim;
    let mut out = Vec::with_capacity(block.cells_per_term() * d);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for c in 0..d {
                    let v = match term {
                        0 => block.feat_xy[((i * n + j) * d) + c] * block.feat_z[k * d + c],
                        1 => block.feat_yz[((j * n + k) * d) + c] * block.feat_x[i * d + c],
                        2 => block.feat_xz[((i * n + k) * d) + c] * block.feat_y[j * d + c],
                        other => panic!("VM term index {other} out of range"),
                    };
                    out.push(v);
                }
            }
        }
    }
    out
}

/// Positions of a VM block's shared grid in `SharedGridSum` mode: the
/// cartesian product of the three line coordinates.
pub fn expand_vm_shared_coordinates(block: &VmBlock) -> Vec<[f32; 3]> {
    let n = block.resolution;
    let mut out = Vec::with_capacity(block.cells_per_term());
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                out.push([block.line_x[i], block.line_y[j], block.line_z[k]]);
            }
        }
    }
    out
}

/// Features of a VM block's shared grid: the sum of the three plane-line
/// products at each cell, accumulated in term order.
pub fn expand_vm_shared_features(block: &VmBlock) -> Vec<f32> {
    let n = block.resolution;
    let d = block.feature_dim;
    let mut out = Vec::with_capacity(block.cells_per_term() * d);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for c in 0..d {
                    let t0 = block.feat_xy[((i * n + j) * d) + c] * block.feat_z[k * d + c];
                    let t1 = block.feat_yz[((j * n + k) * d) + c] * block.feat_x[i * d + c];
                    let t2 = block.feat_xz[((i * n + k) * d) + c] * block.feat_y[j * d + c];
                    out.push((t0 + t1) + t2);
                }
            }
        }
    }
    out
}

/// Positions of every Gaussian a VM block expands to under `mode`. In
/// `PerTermProduct` mode the three term grids are concatenated in term
/// order.
pub fn expand_vm_coordinates(block: &VmBlock, mode: VmMode) -> Vec<[f32; 3]> {
    match mode {
        VmMode::SharedGridSum => expand_vm_shared_coordinates(block),
        VmMode::PerTermProduct => {
            let mut out = Vec::with_capacity(block.cell_count(mode));
            for term in 0..3 {
                out.extend(expand_vm_term_coordinates(block, term));
            }
            out
        }
    }
}

/// Features of every Gaussian a VM block expands to under `mode`, flat
/// row-major, term grids concatenated in term order for `PerTermProduct`.
pub fn expand_vm_features(block: &VmBlock, mode: VmMode) -> Vec<f32> {
    match mode {
        VmMode::SharedGridSum => expand_vm_shared_features(block),
        VmMode::PerTermProduct => {
            let mut out = Vec::with_capacity(block.cell_count(mode) * block.feature_dim);
            for term in 0..3 {
                out.extend(expand_vm_term_features(block, term));
            }
            out
        }
    }
}

/// Raw per-cell scale products of a VM block's grid. Scale factors are
/// shared across terms, so in `PerTermProduct` mode the same `N^3` products
/// repeat for each term.
pub fn expand_vm_scales_raw(block: &VmBlock, mode: VmMode) -> Vec<[f32; 3]> {
    let one = triple_product::<3>(block.resolution, &block.scale_x, &block.scale_y, &block.scale_z);
    tile_for_mode(one, mode)
}

/// Raw per-cell quaternion products of a VM block's grid; shared across
/// terms like the scales.
pub fn expand_vm_rotations_raw(block: &VmBlock, mode: VmMode) -> Vec<[f32; 4]> {
    let one = triple_product::<4>(block.resolution, &block.rot_x, &block.rot_y, &block.rot_z);
    tile_for_mode(one, mode)
}

fn tile_for_mode<T: Copy>(one: Vec<T>, mode: VmMode) -> Vec<T> {
    match mode {
        VmMode::SharedGridSum => one,
        VmMode::PerTermProduct => {
            let mut out = Vec::with_capacity(one.len() * 3);
            for _ in 0..3 {
                out.extend_from_slice(&one);
            }
            out
        }
    }
}

fn check_block_limits(resolution: usize, blocks: usize) -> Result<(), CoreError> {
    if resolution > u16::MAX as usize {
        return Err(CoreError::InvalidModel(format!(
            "resolution {resolution} exceeds the origin index range"
        )));
    }
    if blocks > u32::MAX as usize {
        return Err(CoreError::InvalidModel("too many blocks".into()));
    }
    Ok(())
}

fn push_origins(origins: &mut Vec<GaussianOrigin>, block: u32, term: u8, n: usize) {
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                origins.push(GaussianOrigin {
                    block,
                    term,
                    i: i as u16,
                    j: j as u16,
                    k: k as u16,
                });
            }
        }
    }
}

/// Expands a list of CP blocks (possibly of mixed resolution) into one
/// renderable Gaussian set plus the raw products needed for the backward
/// pass. All blocks must share one feature dimension.
pub fn expand_multi_set(blocks: &[CpBlock]) -> Result<(ExpandedGaussians, ExpansionRaw), CoreError> {
    let feature_dim = common_feature_dim(blocks.iter().map(|b| b.feature_dim))?;
    let mut positions = Vec::new();
    let mut raw_scales = Vec::new();
    let mut raw_rotations = Vec::new();
    let mut features = Vec::new();
    let mut origins = Vec::new();
    for (b, block) in blocks.iter().enumerate() {
        block.validate()?;
        check_block_limits(block.resolution, blocks.len())?;
        positions.extend(expand_cp_coordinates(block));
        raw_scales.extend(expand_cp_scales_raw(block));
        raw_rotations.extend(expand_cp_rotations_raw(block));
        features.extend(expand_cp_features(block));
        push_origins(&mut origins, b as u32, 0, block.resolution);
    }
    Ok(finalize_raw(positions, raw_scales, raw_rotations, features, feature_dim, origins))
}

/// Expands a list of VM blocks under `mode` into one renderable Gaussian
/// set plus the raw products for the backward pass.
pub fn expand_vm_multi_set(
    blocks: &[VmBlock],
    mode: VmMode,
) -> Result<(ExpandedGaussians, ExpansionRaw), CoreError> {
    let feature_dim = common_feature_dim(blocks.iter().map(|b| b.feature_dim))?;
    let mut positions = Vec::new();
    let mut raw_scales = Vec::new();
    let mut raw_rotations = Vec::new();
    let mut features = Vec::new();
    let mut origins = Vec::new();
    for (b, block) in blocks.iter().enumerate() {
        block.validate()?;
        check_block_limits(block.resolution, blocks.len())?;
        positions.extend(expand_vm_coordinates(block, mode));
        raw_scales.extend(expand_vm_scales_raw(block, mode));
        raw_rotations.extend(expand_vm_rotations_raw(block, mode));
        features.extend(expand_vm_features(block, mode));
        match mode {
            VmMode::SharedGridSum => push_origins(&mut origins, b as u32, 0, block.resolution),
            VmMode::PerTermProduct => {
                for term in 0..3u8 {
                    push_origins(&mut origins, b as u32, term, block.resolution);
                }
            }
        }
    }
    Ok(finalize_raw(positions, raw_scales, raw_rotations, features, feature_dim, origins))
}

fn common_feature_dim(dims: impl Iterator<Item = usize>) -> Result<usize, CoreError> {
    let mut shared = None;
    for d in dims {
        match shared {
            None => shared = Some(d),
            Some(prev) if prev != d => {
                return Err(CoreError::InvalidModel(format!(
                    "blocks disagree on feature dimension: {prev} vs {d}"
                )))
            }
            _ => {}
        }
    }
    shared.ok_or_else(|| CoreError::InvalidModel("no blocks to expand".into()))
}
