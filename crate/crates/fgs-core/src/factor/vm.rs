//! VM factor blocks: three plane/line pairs plus shared axis attributes.

use crate::error::CoreError;

/// How a VM block turns its three plane/line terms into Gaussians.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VmMode {
    /// Each term spawns its own `N^3` grid. Term positions combine the
    /// plane's coordinate pair with the complementary line coordinate, and
    /// term features are the product of plane and line features.
    PerTermProduct,
    /// All three terms share one grid addressed by the line coordinates,
    /// and the feature at a cell is the sum of the three plane-line
    /// products.
    SharedGridSum,
}

impl VmMode {
    /// Stable numeric tag used by the binary model format.
    pub fn code(self) -> u8 {
        match self {
            VmMode::PerTermProduct => 0,
            VmMode::SharedGridSum => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self, CoreError> {
        match code {
            0 => Ok(VmMode::PerTermProduct),
            1 => Ok(VmMode::SharedGridSum),
            other => Err(CoreError::Format(format!("unknown VM mode tag {other}"))),
        }
    }
}

/// A VM factor block of resolution `N` with feature dimension `d`.
///
/// Coordinates come in three plane/line pairs:
///
/// * `plane_xy` stores `(x, y)` pairs per plane cell `(i, j)` and pairs with
///   `line_z`;
/// * `plane_yz` stores `(y, z)` pairs per `(j, k)` and pairs with `line_x`;
/// * `plane_xz` stores `(x, z)` pairs per `(i, k)` and pairs with `line_y`.
///
/// Plane arrays are flat row-major: cell `(a, b)` lives at `a * N + b`, with
/// its two coordinates (or `d` feature channels) contiguous. Features mirror
/// the coordinate pairing (`feat_xy` with `feat_z`, and so on). Scale and
/// rotation factors are per-axis vectors shared by all terms, combined by
/// component-wise product exactly as in a CP block.
#[derive(Debug, Clone, PartialEq)]
pub struct VmBlock {
    pub resolution: usize,
    pub feature_dim: usize,
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

impl VmBlock {
    /// Creates a zero-filled block of the given resolution and feature
    /// dimension.
    pub fn new(resolution: usize, feature_dim: usize) -> Result<Self, CoreError> {
        if resolution == 0 {
            return Err(CoreError::InvalidModel("block resolution must be >= 1".into()));
        }
        if feature_dim == 0 {
            return Err(CoreError::InvalidModel("feature dimension must be >= 1".into()));
        }
        let n = resolution;
        let d = feature_dim;
        Ok(Self {
            resolution,
            feature_dim,
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
        })
    }

    /// Number of grid cells a single term expands to.
    pub fn cells_per_term(&self) -> usize {
        self.resolution * self.resolution * self.resolution
    }

    /// Number of Gaussians this block expands to under `mode`.
    pub fn cell_count(&self, mode: VmMode) -> usize {
        match mode {
            VmMode::PerTermProduct => 3 * self.cells_per_term(),
            VmMode::SharedGridSum => self.cells_per_term(),
        }
    }

    /// Checks array lengths against the declared resolution and feature
    /// dimension, and that all coordinate factors are finite.
    pub fn validate(&self) -> Result<(), CoreError> {
        let n = self.resolution;
        let d = self.feature_dim;
        if n == 0 {
            return Err(CoreError::InvalidModel("block resolution must be >= 1".into()));
        }
        if d == 0 {
            return Err(CoreError::InvalidModel("feature dimension must be >= 1".into()));
        }
        let expect = [
            ("plane_xy", self.plane_xy.len(), n * n * 2),
            ("plane_yz", self.plane_yz.len(), n * n * 2),
            ("plane_xz", self.plane_xz.len(), n * n * 2),
            ("line_x", self.line_x.len(), n),
            ("line_y", self.line_y.len(), n),
            ("line_z", self.line_z.len(), n),
            ("feat_xy", self.feat_xy.len(), n * n * d),
            ("feat_yz", self.feat_yz.len(), n * n * d),
            ("feat_xz", self.feat_xz.len(), n * n * d),
            ("feat_x", self.feat_x.len(), n * d),
            ("feat_y", self.feat_y.len(), n * d),
            ("feat_z", self.feat_z.len(), n * d),
            ("scale_x", self.scale_x.len(), n * 3),
            ("scale_y", self.scale_y.len(), n * 3),
            ("scale_z", self.scale_z.len(), n * 3),
            ("rot_x", self.rot_x.len(), n * 4),
            ("rot_y", self.rot_y.len(), n * 4),
            ("rot_z", self.rot_z.len(), n * 4),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(CoreError::ShapeMismatch(format!(
                    "{name}: expected {want} values for N={n}, d={d}, got {got}"
                )));
            }
        }
        for (name, coords) in [
            ("plane_xy", &self.plane_xy),
            ("plane_yz", &self.plane_yz),
            ("plane_xz", &self.plane_xz),
            ("line_x", &self.line_x),
            ("line_y", &self.line_y),
            ("line_z", &self.line_z),
        ] {
            if coords.iter().any(|v| !v.is_finite()) {
                return Err(CoreError::NonFinite(name.into()));
            }
        }
        Ok(())
    }

    /// Number of stored scalars, split as (coordinates, attributes).
    pub fn param_counts(&self) -> (u64, u64) {
        let n = self.resolution as u64;
        let d = self.feature_dim as u64;
        let coords = 3 * (2 * n * n + n);
        let attrs = 3 * (n * n * d + n * d) + 3 * n * (3 + 4);
        (coords, attrs)
    }

    /// All factor arrays in serialization order, coordinates first.
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

    /// Mutable view of all factor arrays in serialization order.
    pub fn arrays_mut(&mut self) -> [&mut Vec<f32>; 18] {
        [
            &mut self.plane_xy,
            &mut self.plane_yz,
            &mut self.plane_xz,
            &mut self.line_x,
            &mut self.line_y,
            &mut self.line_z,
            &mut self.feat_xy,
            &mut self.feat_yz,
            &mut self.feat_xz,
            &mut self.feat_x,
            &mut self.feat_y,
            &mut self.feat_z,
            &mut self.scale_x,
            &mut self.scale_y,
            &mut self.scale_z,
            &mut self.rot_x,
            &mut self.rot_y,
            &mut self.rot_z,
        ]
    }
}
