//! Pinhole camera with a world-to-camera rigid transform.
//!
//! Camera space follows the computer-vision convention: +x right, +y
//! down, +z forward (into the scene). Pixel `(u, v)` of a point at
//! camera-space `(x, y, z)` is `u = fx*x/z + cx`, `v = fy*y/z + cy`.

use nalgebra::{Matrix3, Vector3};

use crate::error::RenderError;

/// Pinhole camera: rigid world-to-camera transform plus intrinsics.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    /// World-to-camera rotation, row-major.
    pub rotation: [[f32; 3]; 3],
    /// World-to-camera translation: `p_cam = R * p_world + t`.
    pub translation: [f32; 3],
    pub fx: f32,
    pub fy: f32,
    pub cx: f32,
    pub cy: f32,
    pub width: usize,
    pub height: usize,
    /// Points at camera depth `z <= near` are culled.
    pub near: f32,
}

impl Camera {
    /// Checks intrinsics and that the rotation is orthonormal within
    /// 1e-6 (in the max-abs entry sense of `R * R^T - I`).
    pub fn validate(&self) -> Result<(), RenderError> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(RenderError::InvalidCamera(format!(
                "focal lengths must be positive and finite, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(RenderError::InvalidCamera("image size must be nonzero".into()));
        }
        if !(self.near > 0.0) {
            return Err(RenderError::InvalidCamera(format!(
                "near plane must be positive, got {}",
                self.near
            )));
        }
        let r = Matrix3::from_fn(|i, j| f64::from(self.rotation[i][j]));
        let gram = r * r.transpose() - Matrix3::identity();
        let dev = gram.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if dev > 1e-6 {
            return Err(RenderError::InvalidCamera(format!(
                "rotation deviates from orthonormal by {dev:.2e}"
            )));
        }
        if (r.determinant() - 1.0).abs() > 1e-5 {
            return Err(RenderError::InvalidCamera("rotation has negative orientation".into()));
        }
        Ok(())
    }

    /// Camera placed at `eye` looking at `target`, with `up` fixing the
    /// roll. The principal point sits at the image center.
    pub fn look_at(
        eye: [f32; 3],
        target: [f32; 3],
        up: [f32; 3],
        fx: f32,
        fy: f32,
        width: usize,
        height: usize,
    ) -> Result<Self, RenderError> {
        let eye_v = Vector3::from(eye).cast::<f64>();
        let fwd = (Vector3::from(target).cast::<f64>() - eye_v)
            .try_normalize(1e-12)
            .ok_or_else(|| RenderError::InvalidCamera("eye and target coincide".into()))?;
        let x = fwd
            .cross(&Vector3::from(up).cast::<f64>())
            .try_normalize(1e-12)
            .ok_or_else(|| RenderError::InvalidCamera("view direction parallel to up".into()))?;
        let y = fwd.cross(&x);
        let rot = Matrix3::from_rows(&[x.transpose(), y.transpose(), fwd.transpose()]);
        let t = -rot * eye_v;
        let camera = Self {
            rotation: std::array::from_fn(|i| std::array::from_fn(|j| rot[(i, j)] as f32)),
            translation: [t.x as f32, t.y as f32, t.z as f32],
            fx,
            fy,
            cx: width as f32 / 2.0,
            cy: height as f32 / 2.0,
            width,
            height,
            near: 0.01,
        };
        camera.validate()?;
        Ok(camera)
    }

    /// Camera from a camera-to-world matrix in the synthetic-dataset
    /// convention (camera looks along -z, +y is up in camera space) plus
    /// the horizontal field of view `camera_angle_x` in radians.
    pub fn from_c2w(
        c2w: [[f64; 4]; 4],
        camera_angle_x: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, RenderError> {
        if !(camera_angle_x > 0.0 && camera_angle_x < std::f64::consts::PI) {
            return Err(RenderError::InvalidCamera(format!(
                "camera_angle_x out of range: {camera_angle_x}"
            )));
        }
        let r_gl = Matrix3::from_fn(|i, j| c2w[i][j]);
        // Flip the y and z camera axes to get the y-down z-forward
        // convention, then invert (transpose) for world-to-camera.
        let flip = Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0));
        let rot = (r_gl * flip).transpose();
        let center = Vector3::new(c2w[0][3], c2w[1][3], c2w[2][3]);
        let t = -rot * center;
        let fx = 0.5 * width as f64 / (0.5 * camera_angle_x).tan();
        let camera = Self {
            rotation: std::array::from_fn(|i| std::array::from_fn(|j| rot[(i, j)] as f32)),
            translation: [t.x as f32, t.y as f32, t.z as f32],
            fx: fx as f32,
            fy: fx as f32,
            cx: width as f32 / 2.0,
            cy: height as f32 / 2.0,
            width,
            height,
            near: 0.01,
        };
        camera.validate()?;
        Ok(camera)
    }

    /// Camera position in world space, `-R^T * t`.
    pub fn center(&self) -> [f32; 3] {
        let r = &self.rotation;
        let t = &self.translation;
        std::array::from_fn(|i| -(r[0][i] * t[0] + r[1][i] * t[1] + r[2][i] * t[2]))
    }

    /// Applies the world-to-camera transform to a point.
    pub fn world_to_camera(&self, p: [f32; 3]) -> [f32; 3] {
        let r = &self.rotation;
        std::array::from_fn(|i| {
            r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2] + self.translation[i]
        })
    }
}
