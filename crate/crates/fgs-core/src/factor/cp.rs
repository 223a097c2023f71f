//! CP factor blocks: one coordinate and attribute vector per axis.

use crate::error::CoreError;

/// A CP factor block of resolution `N` with feature dimension `d`.
///
/// Stores per-axis factors whose products define `N^3` Gaussians:
///
/// * `coord_*`: `N` scalar coordinates per axis; cell `(i, j, k)` sits at
///   `(coord_x[i], coord_y[j], coord_z[k])`.
/// * `scale_*`: `N x 3` rows; the expanded scale is the component-wise
///   product of the three rows.
/// * `rot_*`: `N x 4` quaternion rows `(w, x, y, z)`; the expanded raw
///   quaternion is the component-wise product, normalized before use.
/// * `feat_*`: `N x d` rows; the expanded feature is the component-wise
///   product, later consumed by the shared decoder.
///
/// All two-dimensional factors are stored flat and row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CpBlock {
    pub resolution: usize,
    pub feature_dim: usize,
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

impl CpBlock {
    /// Creates a zero-filled block of the given resolution and feature
    /// dimension. Rotation factors are zero too; the expansion maps the
    /// all-zero raw quaternion to the identity rotation.
    pub fn new(resolution: usize, feature_dim: usize) -> Result<Self, CoreError> {
        if resolution == 0 {
            return Err(CoreError::InvalidModel("block resolution must be >= 1".into()));
        }
        if feature_dim == 0 {
            return Err(CoreError::InvalidModel("feature dimension must be >= 1".into()));
        }
        let n = resolution;
        Ok(Self {
            resolution,
            feature_dim,
            coord_x: vec![0.0; n],
            coord_y: vec![0.0; n],
            coord_z: vec![0.0; n],
            scale_x: vec![0.0; n * 3],
            scale_y: vec![0.0; n * 3],
            scale_z: vec![0.0; n * 3],
            rot_x: vec![0.0; n * 4],
            rot_y: vec![0.0; n * 4],
            rot_z: vec![0.0; n * 4],
            feat_x: vec![0.0; n * feature_dim],
            feat_y: vec![0.0; n * feature_dim],
            feat_z: vec![0.0; n * feature_dim],
        })
    }

    /// Creates a block from coordinate vectors alone, with zeroed attribute
    /// factors. The three vectors must have equal nonzero length and finite
    /// entries.
    pub fn from_coords(
        coord_x: Vec<f32>,
        coord_y: Vec<f32>,
        coord_z: Vec<f32>,
        feature_dim: usize,
    ) -> Result<Self, CoreError> {
        let n = coord_x.len();
        if coord_y.len() != n || coord_z.len() != n {
            return Err(CoreError::ShapeMismatch(format!(
                "coordinate vectors must share one length, got {}/{}/{}",
                n,
                coord_y.len(),
                coord_z.len()
            )));
        }
        let mut block = Self::new(n, feature_dim)?;
        block.coord_x = coord_x;
        block.coord_y = coord_y;
        block.coord_z = coord_z;
        block.validate()?;
        Ok(block)
    }

    /// Number of grid cells this block expands to.
    pub fn cell_count(&self) -> usize {
        self.resolution * self.resolution * self.resolution
    }

    /// Checks array lengths against the declared resolution and feature
    /// dimension, and that coordinates are finite.
    pub fn validate(&self) -> Result<(), CoreError> {
        let n = self.resolution;
        if n == 0 {
            return Err(CoreError::InvalidModel("block resolution must be >= 1".into()));
        }
        if self.feature_dim == 0 {
            return Err(CoreError::InvalidModel("feature dimension must be >= 1".into()));
        }
        let expect = [
            ("coord_x", self.coord_x.len(), n),
            ("coord_y", self.coord_y.len(), n),
            ("coord_z", self.coord_z.len(), n),
            ("scale_x", self.scale_x.len(), n * 3),
            ("scale_y", self.scale_y.len(), n * 3),
            ("scale_z", self.scale_z.len(), n * 3),
            ("rot_x", self.rot_x.len(), n * 4),
            ("rot_y", self.rot_y.len(), n * 4),
            ("rot_z", self.rot_z.len(), n * 4),
            ("feat_x", self.feat_x.len(), n * self.feature_dim),
            ("feat_y", self.feat_y.len(), n * self.feature_dim),
            ("feat_z", self.feat_z.len(), n * self.feature_dim),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(CoreError::ShapeMismatch(format!(
                    "{name}: expected {want} values for N={n}, got {got}"
                )));
            }
        }
        for (name, coords) in [
            ("coord_x", &self.coord_x),
            ("coord_y", &self.coord_y),
            ("coord_z", &self.coord_z),
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
        let coords = 3 * n;
        let attrs = 3 * n * (3 + 4 + self.feature_dim as u64);
        (coords, attrs)
    }

    /// The coordinate factor arrays in declared order (x, y, z).
    pub fn coord_arrays(&self) -> [&Vec<f32>; 3] {
        [&self.coord_x, &self.coord_y, &self.coord_z]
    }

    /// All factor arrays in serialization order, coordinates first.
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

    /// Mutable view of all factor arrays in serialization order.
    pub fn arrays_mut(&mut self) -> [&mut Vec<f32>; 12] {
        [
            &mut self.coord_x,
            &mut self.coord_y,
            &mut self.coord_z,
            &mut self.scale_x,
            &mut self.scale_y,
            &mut self.scale_z,
            &mut self.rot_x,
            &mut self.rot_y,
            &mut self.rot_z,
            &mut self.feat_x,
            &mut self.feat_y,
            &mut self.feat_z,
        ]
    }
}
