//! Scene description files and image IO.
//!
//! A scene ships a JSON transform list per split (train/test): the
//! horizontal field of view and one camera-to-world matrix per frame,
//! each matrix in the y-up, looking-down-negative-z convention that
//! [`Camera::from_c2w`] converts. Images are PNG; transparent pixels
//! are composited over a caller-chosen background at load time.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::RenderError;

/// One view: the image path (relative to the JSON file by convention)
/// and its camera-to-world transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformFrame {
    pub file_path: String,
    pub transform_matrix: [[f64; 4]; 4],
}

/// A split's worth of views sharing one field of view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSet {
    pub camera_angle_x: f64,
    pub frames: Vec<TransformFrame>,
}

impl TransformSet {
    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self, RenderError> {
        let reader = BufReader::new(File::open(path)?);
        serde_json::from_reader(reader).map_err(|e| RenderError::Format(e.to_string()))
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<(), RenderError> {
        let mut writer = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut writer, self)
            .map_err(|e| RenderError::Format(e.to_string()))?;
        Ok(())
    }

    /// Builds the pinhole camera for one frame at the given resolution.
    pub fn camera(&self, frame: usize, width: usize, height: usize) -> Result<Camera, RenderError> {
        let f = self.frames.get(frame).ok_or_else(|| {
            RenderError::Format(format!(
                "frame {frame} out of range ({} frames)",
                self.frames.len()
            ))
        })?;
        Camera::from_c2w(f.transform_matrix, self.camera_angle_x, width, height)
    }
}

/// Loads a PNG as row-major `height x width x 3` floats in [0, 1],
/// compositing any alpha channel over `background`.
pub fn load_image<P: AsRef<Path>>(
    path: P,
    background: [f32; 3],
) -> Result<(usize, usize, Vec<f32>), RenderError> {
    let rgba = image::open(path)?.to_rgba8();
    let (width, height) = (rgba.width() as usize, rgba.height() as usize);
    let mut out = Vec::with_capacity(width * height * 3);
    for px in rgba.pixels() {
        let a = f32::from(px[3]) / 255.0;
        for c in 0..3 {
            out.push(a * f32::from(px[c]) / 255.0 + (1.0 - a) * background[c]);
        }
    }
    Ok((width, height, out))
}

/// Saves row-major `height x width x 3` floats as an 8-bit PNG,
/// clamping to [0, 1] and rounding to the nearest level.
pub fn save_image<P: AsRef<Path>>(
    path: P,
    width: usize,
    height: usize,
    data: &[f32],
) -> Result<(), RenderError> {
    if data.len() != width * height * 3 {
        return Err(RenderError::ShapeMismatch(format!(
            "image buffer holds {} values, expected {}",
            data.len(),
            width * height * 3
        )));
    }
    let bytes: Vec<u8> =
        data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let img = image::RgbImage::from_raw(width as u32, height as u32, bytes)
        .expect("buffer length checked above");
    img.save(path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_c2w() -> [[f64; 4]; 4] {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        m
    }

    #[test]
    fn transforms_roundtrip_and_build_cameras() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("transforms_train.json");
        let set = TransformSet {
            camera_angle_x: std::f64::consts::FRAC_PI_2,
            frames: vec![
                TransformFrame { file_path: "train/r_0".into(), transform_matrix: identity_c2w() },
                TransformFrame {
                    file_path: "train/r_1".into(),
                    transform_matrix: {
                        let mut m = identity_c2w();
                        m[0][3] = 1.5;
                        m
                    },
                },
            ],
        };
        set.save(&path).unwrap();
        let loaded = TransformSet::load(&path).unwrap();
        assert_eq!(loaded, set);
        let cam = loaded.camera(1, 100, 80).unwrap();
        assert!((cam.fx - 50.0).abs() < 1e-4);
        assert_eq!(cam.fy, cam.fx);
        let c = cam.center();
        assert!((c[0] - 1.5).abs() < 1e-5 && c[1].abs() < 1e-5 && c[2].abs() < 1e-5);
        assert!(loaded.camera(2, 100, 80).is_err());
    }

    #[test]
    fn transforms_reject_malformed_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.json");
        std::fs::write(&path, b"{\"camera_angle_x\": []}").unwrap();
        assert!(matches!(TransformSet::load(&path), Err(RenderError::Format(_))));
        assert!(TransformSet::load(dir.path().join("missing.json")).is_err());
    }

    #[test]
    fn png_roundtrip_is_exact_for_quantized_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let (width, height) = (7usize, 5usize);
        let data: Vec<f32> =
            (0..width * height * 3).map(|i| ((i * 11) % 256) as f32 / 255.0).collect();
        save_image(&path, width, height, &data).unwrap();
        let (w, h, loaded) = load_image(&path, [0.0; 3]).unwrap();
        assert_eq!((w, h), (width, height));
        for (a, b) in loaded.iter().zip(&data) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert!(save_image(&path, width, height, &data[1..]).is_err());
    }

    #[test]
    fn alpha_composites_over_the_background() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rgba.png");
        let mut img = image::RgbaImage::new(2, 1);
        img.put_pixel(0, 0, image::Rgba([255, 0, 0, 255]));
        img.put_pixel(1, 0, image::Rgba([0, 255, 0, 128]));
        img.save(&path).unwrap();
        let bg = [0.25f32, 0.5, 1.0];
        let (_, _, data) = load_image(&path, bg).unwrap();
        assert_eq!(&data[0..3], &[1.0, 0.0, 0.0]);
        let a = 128.0 / 255.0;
        let expect = [(1.0 - a) * bg[0], a + (1.0 - a) * bg[1], (1.0 - a) * bg[2]];
        for c in 0..3 {
            assert!((data[3 + c] - expect[c]).abs() < 1e-6, "channel {c}");
        }
    }
}
