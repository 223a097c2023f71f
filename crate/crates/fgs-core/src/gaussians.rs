//! Expanded Gaussian sets: the dense output of factor-block expansion.

use crate::math::quat_normalize;

/// Smallest scale magnitude fed to the renderer. Raw factor products may be
/// zero or negative; the renderer consumes `max(|raw|, EPS_SCALE)` so
/// covariances stay positive definite.
pub const EPS_SCALE: f32 = 1e-6;

/// Where an expanded Gaussian came from: its block, the VM term (0 for CP
/// and shared-grid VM), and the grid cell indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GaussianOrigin {
    pub block: u32,
    pub term: u8,
    pub i: u16,
    pub j: u16,
    pub k: u16,
}

/// A dense set of Gaussians produced by expanding one or more factor
/// blocks, with attributes already made renderable: scales are positive
/// magnitudes and quaternions are unit-norm.
///
/// `features` is row-major `len x feature_dim`; `scales` holds positive
/// per-axis extents; `rotations` holds unit quaternions `(w, x, y, z)`.
#[derive(Debug, Clone)]
pub struct ExpandedGaussians {
    pub positions: Vec<[f32; 3]>,
    pub scales: Vec<[f32; 3]>,
    pub rotations: Vec<[f32; 4]>,
    pub features: Vec<f32>,
    pub feature_dim: usize,
    pub origins: Vec<GaussianOrigin>,
}

impl ExpandedGaussians {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Raw expansion products kept alongside [`ExpandedGaussians`] for the
/// backward pass: the unsanitized scale products and unnormalized
/// quaternion products, in the same order as the expanded set.
#[derive(Debug, Clone)]
pub struct ExpansionRaw {
    pub scales: Vec<[f32; 3]>,
    pub rotations: Vec<[f32; 4]>,
}

/// Maps a raw scale product to the positive magnitude the renderer uses.
pub fn sanitize_scale(raw: f32) -> f32 {
    raw.abs().max(EPS_SCALE)
}

/// Derivative of [`sanitize_scale`] with respect to the raw value: the sign
/// of the raw value where its magnitude exceeds the floor, zero inside it.
pub fn sanitize_scale_grad(raw: f32) -> f32 {
    if raw.abs() > EPS_SCALE {
        if raw >= 0.0 {
            1.0
        } else {
            -1.0
        }
    } else {
        0.0
    }
}

/// Builds the renderable set from raw products: scales pass through
/// [`sanitize_scale`], quaternions are normalized (all-zero maps to the
/// identity).
pub fn finalize_raw(
    positions: Vec<[f32; 3]>,
    raw_scales: Vec<[f32; 3]>,
    raw_rotations: Vec<[f32; 4]>,
    features: Vec<f32>,
    feature_dim: usize,
    origins: Vec<GaussianOrigin>,
) -> (ExpandedGaussians, ExpansionRaw) {
    let scales = raw_scales
        .iter()
        .map(|s| [sanitize_scale(s[0]), sanitize_scale(s[1]), sanitize_scale(s[2])])
        .collect();
    let rotations = raw_rotations.iter().map(|&q| quat_normalize(q)).collect();
    (
        ExpandedGaussians {
            positions,
            scales,
            rotations,
            features,
            feature_dim,
            origins,
        },
        ExpansionRaw {
            scales: raw_scales,
            rotations: raw_rotations,
        },
    )
}
