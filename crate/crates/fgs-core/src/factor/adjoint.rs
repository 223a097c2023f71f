//! Gradient accumulation from expanded Gaussians back onto factor arrays.
//!
//! Each function is the adjoint of the matching expansion in
//! [`super::expand`]: given per-cell gradients it sums contributions onto
//! the factor entries, iterating cells in ascending row-major order so
//! accumulation is deterministic.

use crate::error::CoreError;
use crate::factor::{CpBlock, VmBlock, VmMode};

/// Per-cell gradients flowing back into a block expansion.
///
/// `scales` and `rotations` are gradients with respect to the *raw*
/// products; callers must already have backpropagated through scale
/// sanitizing and quaternion normalization. `features` is flat `M x d`.
#[derive(Debug, Clone, Copy)]
pub struct ExpansionGrads<'a> {
    pub positions: &'a [[f32; 3]],
    pub scales: &'a [[f32; 3]],
    pub rotations: &'a [[f32; 4]],
    pub features: &'a [f32],
}

/// Gradients for every factor array of a [`CpBlock`], in the block's array
/// order.
#[derive(Debug, Clone)]
pub struct CpBlockGrads {
    pub coord_x: Vec<f32>,
    pub coord_y: Vec<f32>,
    pub coord_z: Vec<f32>,
    pub scale_x: Vec<f32>,
    pub scale_y: Vec<f32>,
    pub scale_z: Vec<f32>,
    pub rot_x: Vec<f32>,
    pub rot_y: Vec<f32>,
    pub rot_z: Vec<f32>,
    pub feat_x: Vec<f32>,
    pub feat_y: Vec<f32>,
    pub feat_z: Vec<f32>,
}

impl CpBlockGrads {
    pub fn zeros(n: usize, d: usize) -> Self {
        Self {
            coord_x: vec![0.0; n],
            coord_y: vec![0.0; n],
            coord_z: vec![0.0; n],
            scale_x: vec![0.0; n * 3],
            scale_y: vec![0.0; n * 3],
            scale_z: vec![0.0; n * 3],
            rot_x: vec![0.0; n * 4],
            rot_y: vec![0.0; n * 4],
            rot_z: vec![0.0; n * 4],
            feat_x: vec![0.0; n * d],
            feat_y: vec![0.0; n * d],
            feat_z: vec![0.0; n * d],
        }
    }

    /// Arrays in the same order as [`CpBlock::arrays`].
    pub fn arrays(&self) -> [&Vec<f32>; 12] {
        [
            &self.coord_x,
            &self.coord_y,
            &self.coord_z,
            &self.scale_x,
            &self.scale_y,
            &self.scale_z,
            &self.rot_x,
            &self.rot_y,
            &self.rot_z,
            &self.feat_x,
            &self.feat_y,
            &self.feat_z,
        ]
    }
}

/// Gradients for every factor array of a [`VmBlock`], in the block's array
/// order.
#[derive(Debug, Clone)]
pub struct VmBlockGrads {
    pub plane_xy: Vec<f32>,
    pub plane_yz: Vec<f32>,
    pub plane_xz: Vec<f32>,
    pub line_x: Vec<f32>,
    pub line_y: Vec<f32>,
    pub line_z: Vec<f32>,
    pub feat_xy: Vec<f32>,
    pub feat_yz: Vec<f32>,
    pub feat_xz: Vec<f32>,
    pub feat_x: Vec<f32>,
    pub feat_y: Vec<f32>,
    pub feat_z: Vec<f32>,
    pub scale_x: Vec<f32>,
    pub scale_y: Vec<f32>,
    pub scale_z: Vec<f32>,
    pub rot_x: Vec<f32>,
    pub rot_y: Vec<f32>,
    pub rot_z: Vec<f32>,
}

impl VmBlockGrads {
    pub fn zeros(n: usize, d: usize) -> Self {
        Self {
            plane_xy: vec![0.0; n * n * 2],
            plane_yz: vec![0.0; n * n * 2],
            plane_xz: vec![0.0; n * n * 2],
            line_x: vec![0.0; n],
            line_y: vec![0.0; n],
            line_z: vec![0.0; n],
            feat_xy: vec![0.0; n * n * d],
            feat_yz: vec![0.0; n * n * d],
            feat_xz: vec![0.0; n * n * d],
            feat_x: vec![0.0; n * d],
            feat_y: vec![0.0; n * d],
            feat_z: vec![0.0; n * d],
            scale_x: vec![0.0; n * 3],
            scale_y: vec![0.0; n * 3],
            scale_z: vec![0.0; n * 3],
            rot_x: vec![0.0; n * 4],
            rot_y: vec![0.0; n * 4],
            rot_z: vec![0.0; n * 4],
        }
    }

    /// Arrays in the same order as [`VmBlock::arrays`].
    pub fn arrays(&self) -> [&Vec<f32>; 18] {
        [
            &self.plane_xy,
            &self.plane_yz,
            &self.plane_xz,
            &self.line_x,
            &self.line_y,
            &self.line_z,
            &self.feat_xy,
            &self.feat_yz,
            &self.feat_xz,
            &self.feat_x,
            &self.feat_y,
            &self.feat_z,
            &self.scale_x,
            &self.scale_y,
            &self.scale_z,
            &self.rot_x,
            &self.rot_y,
            &self.rot_z,
        ]
    }
}

/// Adjoint of the coordinate cartesian product: sums position gradients
/// onto the three axis coordinate vectors.
pub fn coordinate_adjoint(n: usize, grad_positions: &[[f32; 3]]) -> [Vec<f32>; 3] {
    let mut gx = vec![0.0f32; n];
    let mut gy = vec![0.0f32; n];
    let mut gz = vec![0.0f32; n];
    let mut cell = 0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let g = grad_positions[cell];
                gx[i] += g[0];
                gy[j] += g[1];
                gz[k] += g[2];
                cell += 1;
            }
        }
    }
    [gx, gy, gz]
}

/// Adjoint of the component-wise triple product for `C`-component rows:
/// each factor entry receives the cell gradient times the product of the
/// other two factors.
pub fn triple_product_adjoint<const C: usize>(
    n: usize,
    ax: &[f32],
    ay: &[f32],
    az: &[f32],
    grad: &[[f32; C]],
) -> [Vec<f32>; 3] {
    let mut gax = vec![0.0f32; n * C];
    let mut gay = vec![0.0f32; n * C];
    let mut gaz = vec![0.0f32; n * C];
    let mut cell = 0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for c in 0..C {
                    let g = grad[cell][c];
                    let (x, y, z) = (ax[i * C + c], ay[j * C + c], az[k * C + c]);
                    gax[i * C + c] += g * (y * z);
                    gay[j * C + c] += g * (x * z);
                    gaz[k * C + c] += g * (x * y);
                }
                cell += 1;
            }
        }
    }
    [gax, gay, gaz]
}

/// [`triple_product_adjoint`] for flat `d`-channel feature gradients.
fn triple_product_adjoint_flat(
    n: usize,
    d: usize,
    ax: &[f32],
    ay: &[f32],
    az: &[f32],
    grad: &[f32],
) -> [Vec<f32>; 3] {
    let mut gax = vec![0.0f32; n * d];
    let mut gay = vec![0.0f32; n * d];
    let mut gaz = vec![0.0f32; n * d];
    let mut cell = 0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for c in 0..d {
                    let g = grad[cell * d + c];
                    let (x, y, z) = (ax[i * d + c], ay[j * d + c], az[k * d + c]);
                    gax[i * d + c] += g * (y * z);
                    gay[j * d + c] += g * (x * z);
                    gaz[k * d + c] += g * (x * y);
                }
                cell += 1;
            }
        }
    }
    [gax, gay, gaz]
}

fn check_grad_shapes(cells: usize, d: usize, grads: &ExpansionGrads) -> Result<(), CoreError> {
    let lens = [
        ("positions", grads.positions.len(), cells),
        ("scales", grads.scales.len(), cells),
        ("rotations", grads.rotations.len(), cells),
        ("features", grads.features.len(), cells * d),
    ];
    for (name, got, want) in lens {
        if got != want {
            return Err(CoreError::ShapeMismatch(format!(
                "gradient array {name}: expected {want} entries, got {got}"
            )));
        }
    }
    Ok(())
}

/// Accumulates the full expansion gradient of one CP block onto its
/// factor arrays.
pub fn backprop_cp_expansion(
    block: &CpBlock,
    grads: &ExpansionGrads,
) -> Result<CpBlockGrads, CoreError> {
    let n = block.resolution;
    let d = block.feature_dim;
    check_grad_shapes(block.cell_count(), d, grads)?;
    let mut out = CpBlockGrads::zeros(n, d);
    let [gx, gy, gz] = coordinate_adjoint(n, grads.positions);
    out.coord_x = gx;
    out.coord_y = gy;
    out.coord_z = gz;
    let [gx, gy, gz] =
        triple_product_adjoint::<3>(n, &block.scale_x, &block.scale_y, &block.scale_z, grads.scales);
    out.scale_x = gx;
    out.scale_y = gy;
    out.scale_z = gz;
    let [gx, gy, gz] =
        triple_product_adjoint::<4>(n, &block.rot_x, &block.rot_y, &block.rot_z, grads.rotations);
    out.rot_x = gx;
    out.rot_y = gy;
    out.rot_z = gz;
    let [gx, gy, gz] =
        triple_product_adjoint_flat(n, d, &block.feat_x, &block.feat_y, &block.feat_z, grads.features);
    out.feat_x = gx;
    out.feat_y = gy;
    out.feat_z = gz;
    Ok(out)
}

/// Accumulates the full expansion gradient of one VM block onto its factor
/// arrays. Gradient arrays must cover the block's whole expansion under
/// `mode`: `3 N^3` cells in term order for `PerTermProduct`, `N^3`
/// otherwise.
pub fn backprop_vm_expansion(
    block: &VmBlock,
    mode: VmMode,
    grads: &ExpansionGrads,
) -> Result<VmBlockGrads, CoreError> {
    let n = block.resolution;
    let d = block.feature_dim;
    check_grad_shapes(block.cell_count(mode), d, grads)?;
    let mut out = VmBlockGrads::zeros(n, d);
    match mode {
        VmMode::SharedGridSum => {
            let [gx, gy, gz] = coordinate_adjoint(n, grads.positions);
            out.line_x = gx;
            out.line_y = gy;
            out.line_z = gz;
            accumulate_vm_term_features(block, 0, grads.features, &mut out);
            accumulate_vm_term_features(block, 1, grads.features, &mut out);
            accumulate_vm_term_features(block, 2, grads.features, &mut out);
            accumulate_vm_shared_attrs(block, grads.scales, grads.rotations, &mut out);
        }
        VmMode::PerTermProduct => {
            let cells = block.cells_per_term();
            for term in 0..3 {
                let lo = term * cells;
                let hi = lo + cells;
                accumulate_vm_term_positions(block, term, &grads.positions[lo..hi], &mut out);
                accumulate_vm_term_features(
                    block,
                    term,
                    &grads.features[lo * d..hi * d],
                    &mut out,
                );
            }
            // Scale and rotation factors are shared by all three terms: sum
            // the term gradients per cell, then take one product adjoint.
            let mut gs = vec![[0.0f32; 3]; cells];
            let mut gr = vec![[0.0f32; 4]; cells];
            for term in 0..3 {
                for cell in 0..cells {
                    for c in 0..3 {
                        gs[cell][c] += grads.scales[term * cells + cell][c];
                    }
                    for c in 0..4 {
                        gr[cell][c] += grads.rotations[term * cells + cell][c];
                    }
                }
            }
            accumulate_vm_shared_attrs(block, &gs, &gr, &mut out);
        }
    }
    Ok(out)
}

fn accumulate_vm_shared_attrs(
    block: &VmBlock,
    grad_scales: &[[f32; 3]],
    grad_rotations: &[[f32; 4]],
    out: &mut VmBlockGrads,
) {
    let n = block.resolution;
    let [gx, gy, gz] =
        triple_product_adjoint::<3>(n, &block.scale_x, &block.scale_y, &block.scale_z, grad_scales);
    add_into(&mut out.scale_x, &gx);
    add_into(&mut out.scale_y, &gy);
    add_into(&mut out.scale_z, &gz);
    let [gx, gy, gz] =
        triple_product_adjoint::<4>(n, &block.rot_x, &block.rot_y, &block.rot_z, grad_rotations);
    add_into(&mut out.rot_x, &gx);
    add_into(&mut out.rot_y, &gy);
    add_into(&mut out.rot_z, &gz);
}

fn add_into(dst: &mut [f32], src: &[f32]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn accumulate_vm_term_positions(
    block: &VmBlock,
    term: usize,
    grad: &[[f32; 3]],
    out: &mut VmBlockGrads,
) {
    let n = block.resolution;
    let mut cell = 0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let g = grad[cell];
                match term {
                    0 => {
                        let base = (i * n + j) * 2;
                        out.plane_xy[base] += g[0];
                        out.plane_xy[base + 1] += g[1];
                        out.line_z[k] += g[2];
                    }
                    1 => {
                        let base = (j * n + k) * 2;
                        out.line_x[i] += g[0];
                        out.plane_yz[base] += g[1];
                        out.plane_yz[base + 1] += g[2];
                    }
                    2 => {
                        let base = (i * n + k) * 2;
                        out.plane_xz[base] += g[0];
                        out.line_y[j] += g[1];
                        out.plane_xz[base + 1] += g[2];
                    }
                    other => panic!("VM term index {other} out of range"),
                }
                cell += 1;
            }
        }
    }
}

fn accumulate_vm_term_features(block: &VmBlock, term: usize, grad: &[f32], out: &mut VmBlockGrads) {
    let n = block.resolution;
    let d = block.feature_dim;
    let mut cell = 0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for c in 0..d {
                    let g = grad[cell * d + c];
                    match term {
                        0 => {
                            let p = (i * n + j) * d + c;
                            out.feat_xy[p] += g * block.feat_z[k * d + c];
                            out.feat_z[k * d + c] += g * block.feat_xy[p];
                        }
                        1 => {
                            let p = (j * n + k) * d + c;
                            out.feat_yz[p] += g * block.feat_x[i * d + c];
                            out.feat_x[i * d + c] += g * block.feat_yz[p];
                        }
                        2 => {
                            let p = (i * n + k) * d + c;
                            out.feat_xz[p] += g * block.feat_y[j * d + c];
                            out.feat_y[j * d + c] += g * block.feat_xz[p];
                        }
                        other => panic!("VM term index {other} out of range"),
                    }
                }
                cell += 1;
            }
        }
    }
}
