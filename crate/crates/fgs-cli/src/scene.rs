//! Scene directories: camera transforms plus target images per split,
//! and the generator for the synthetic toy scene.

use std::fs;
use std::path::{Path, PathBuf};

use fgs_core::ply::{write_ply_file, PointCloud};
use fgs_core::sh::SH_C0;
use fgs_render::{load_image, save_image, Camera, TransformFrame, TransformSet};
use fgs_train::{generate_toy_scene, render_dense, ToyConfig, TrainView};

use crate::args::GenToyArgs;
use crate::error::CliError;

/// Path of a split's transforms file inside a scene directory.
pub fn transforms_path(scene: &Path, split: &str) -> PathBuf {
    scene.join(format!("transforms_{split}.json"))
}

/// Path of the scene's optional point cloud.
pub fn points_path(scene: &Path) -> PathBuf {
    scene.join("points.ply")
}

/// A split read from disk: one view per frame plus the paths that were
/// touched, for manifests.
#[derive(Debug)]
pub struct LoadedSplit {
    pub views: Vec<TrainView>,
    pub transforms: PathBuf,
    pub images: Vec<PathBuf>,
}

/// Image path for a frame: relative to the scene directory, with `.png`
/// appended when the transforms entry has no extension.
fn image_path(scene: &Path, file_path: &str) -> PathBuf {
    let mut path = scene.join(file_path);
    if path.extension().is_none() {
        path.set_extension("png");
    }
    path
}

/// Reads a split's transforms and images; each camera takes its
/// resolution from the image it pairs with.
pub fn load_split(
    scene: &Path,
    split: &str,
    background: [f32; 3],
) -> Result<LoadedSplit, CliError> {
    let transforms = transforms_path(scene, split);
    if !transforms.exists() {
        return Err(CliError::Data(format!(
            "scene {} has no {split} split ({} is missing)",
            scene.display(),
            transforms.display()
        )));
    }
    let set = TransformSet::load(&transforms)?;
    if set.frames.is_empty() {
        return Err(CliError::Data(format!(
            "{} lists no frames",
            transforms.display()
        )));
    }
    let mut views = Vec::with_capacity(set.frames.len());
    let mut images = Vec::with_capacity(set.frames.len());
    for (idx, frame) in set.frames.iter().enumerate() {
        let path = image_path(scene, &frame.file_path);
        let (width, height, image) = load_image(&path, background).map_err(|e| {
            CliError::Data(format!("frame {idx} image {}: {e}", path.display()))
        })?;
        let camera = set.camera(idx, width, height)?;
        views.push(TrainView { camera, image });
        images.push(path);
    }
    Ok(LoadedSplit {
        views,
        transforms,
        images,
    })
}

/// Like [`load_split`], but a missing transforms file is `None` rather
/// than an error, for optional held-out splits.
pub fn load_split_optional(
    scene: &Path,
    split: &str,
    background: [f32; 3],
) -> Result<Option<LoadedSplit>, CliError> {
    if !transforms_path(scene, split).exists() {
        return Ok(None);
    }
    load_split(scene, split, background).map(Some)
}

/// Camera-to-world matrix in the transforms-JSON convention (camera
/// looks along -z, +y up), inverted from the camera's world-to-camera
/// transform.
pub fn c2w_matrix(camera: &Camera) -> [[f64; 4]; 4] {
    let r = &camera.rotation;
    let c = camera.center();
    let mut m = [[0.0f64; 4]; 4];
    m[3][3] = 1.0;
    for i in 0..3 {
        for j in 0..3 {
            // Transpose for the inverse rotation, then flip the y and z
            // camera axes back to the y-up looking-down-negative-z form.
            let v = f64::from(r[j][i]);
            m[i][j] = if j == 0 { v } else { -v };
        }
        m[i][3] = f64::from(c[i]);
    }
    m
}

/// Builds a transforms set from cameras sharing one focal length. Every
/// camera must be square-pixel (`fx == fy`).
fn transforms_from_cameras(
    cameras: &[Camera],
    prefix: &str,
) -> Result<TransformSet, CliError> {
    let first = cameras.first().ok_or_else(|| {
        CliError::Data("cannot build a transforms file from zero cameras".into())
    })?;
    let angle = 2.0 * (0.5 * first.width as f64 / f64::from(first.fx)).atan();
    let frames = cameras
        .iter()
        .enumerate()
        .map(|(i, cam)| TransformFrame {
            file_path: format!("{prefix}_{i:02}"),
            transform_matrix: c2w_matrix(cam),
        })
        .collect();
    Ok(TransformSet {
        camera_angle_x: angle,
        frames,
    })
}

/// What `gen-toy` wrote, for the final summary line.
pub struct ToySummary {
    pub gaussians: usize,
    pub train_views: usize,
    pub test_views: usize,
    pub dense_parameter_count: u64,
}

/// Generates the toy scene and writes it as a scene directory: one
/// transforms file and image set per split, the ground-truth positions
/// as a point cloud, and an info.json with the scene's size.
///
/// Images are rendered through cameras re-read from the saved
/// transforms, so training on the directory sees exactly the geometry
/// that produced the targets.
pub fn write_toy_scene(args: &GenToyArgs) -> Result<ToySummary, CliError> {
    let config = ToyConfig {
        gaussians: args.gaussians,
        train_views: args.train_views,
        test_views: args.test_views,
        width: args.size,
        height: args.size,
        focal: args.focal,
        camera_radius: args.radius,
        seed: args.seed,
        ..ToyConfig::default()
    };
    let scene = generate_toy_scene(&config)?;
    fs::create_dir_all(args.out.join("images"))?;

    let splits: [(&str, Vec<Camera>); 2] = [
        ("train", scene.train.iter().map(|v| v.camera.clone()).collect()),
        ("test", scene.test.iter().map(|v| v.camera.clone()).collect()),
    ];
    for (split, cameras) in &splits {
        if cameras.is_empty() {
            continue;
        }
        let set = transforms_from_cameras(cameras, &format!("images/{split}"))?;
        let path = transforms_path(&args.out, split);
        set.save(&path)?;
        // Round-trip through the file so the rendered targets match the
        // cameras a consumer reconstructs, bit for bit.
        let reloaded = TransformSet::load(&path)?;
        for (i, frame) in reloaded.frames.iter().enumerate() {
            let camera = reloaded.camera(i, args.size, args.size)?;
            let output = render_dense(&scene.gaussians, &camera, &scene.settings)?;
            let img = image_path(&args.out, &frame.file_path);
            save_image(&img, args.size, args.size, &output.image)?;
        }
    }

    let cloud = PointCloud {
        positions: scene.gaussians.iter().map(|g| g.position).collect(),
        colors: Some(
            scene
                .gaussians
                .iter()
                .map(|g| {
                    std::array::from_fn(|ch| (0.5 + SH_C0 * g.sh[ch]).clamp(0.0, 1.0))
                })
                .collect(),
        ),
    };
    write_ply_file(&cloud, points_path(&args.out))?;

    let summary = ToySummary {
        gaussians: scene.gaussians.len(),
        train_views: scene.train.len(),
        test_views: scene.test.len(),
        dense_parameter_count: scene.dense_parameter_count(),
    };
    let info = serde_json::json!({
        "gaussians": summary.gaussians,
        "train_views": summary.train_views,
        "test_views": summary.test_views,
        "width": args.size,
        "height": args.size,
        "seed": args.seed,
        "dense_parameter_count": summary.dense_parameter_count,
    });
    fs::write(
        args.out.join("info.json"),
        serde_json::to_string_pretty(&info)
            .map_err(|e| CliError::Data(format!("info serialization: {e}")))?
            + "\n",
    )?;
    Ok(summary)
}

/// Runs the gen-toy subcommand.
pub fn run_gen_toy(args: &GenToyArgs) -> Result<(), CliError> {
    let summary = write_toy_scene(args)?;
    println!(
        "wrote {} with {} gaussians, {} train and {} test views ({} dense scalars)",
        args.out.display(),
        summary.gaussians,
        summary.train_views,
        summary.test_views,
        summary.dense_parameter_count,
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_args(dir: &Path) -> GenToyArgs {
        GenToyArgs {
            out: dir.to_path_buf(),
            gaussians: 40,
            train_views: 3,
            test_views: 2,
            size: 24,
            focal: 26.0,
            radius: 2.5,
            seed: 5,
        }
    }

    #[test]
    fn toy_scene_roundtrips_through_the_directory() {
        let dir = tempfile::tempdir().unwrap();
        let summary = write_toy_scene(&toy_args(dir.path())).unwrap();
        assert_eq!(summary.train_views, 3);
        assert_eq!(summary.dense_parameter_count, 40 * 59);

        let train = load_split(dir.path(), "train", [0.0; 3]).unwrap();
        let test = load_split(dir.path(), "test", [0.0; 3]).unwrap();
        assert_eq!(train.views.len(), 3);
        assert_eq!(test.views.len(), 2);
        for view in train.views.iter().chain(&test.views) {
            assert_eq!(view.camera.width, 24);
            assert_eq!(view.image.len(), 24 * 24 * 3);
            view.camera.validate().unwrap();
        }
        // Distinct cameras per view.
        let c0 = train.views[0].camera.center();
        let c1 = train.views[1].camera.center();
        assert!(c0.iter().zip(&c1).any(|(a, b)| (a - b).abs() > 1e-3));

        let cloud = fgs_core::ply::read_ply_file(points_path(dir.path())).unwrap();
        assert_eq!(cloud.len(), 40);
        assert!(cloud.colors.is_some());
    }

    #[test]
    fn generation_is_deterministic_on_disk() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_toy_scene(&toy_args(a.path())).unwrap();
        write_toy_scene(&toy_args(b.path())).unwrap();
        for name in ["transforms_train.json", "images/train_00.png", "points.ply"] {
            let lhs = fs::read(a.path().join(name)).unwrap();
            let rhs = fs::read(b.path().join(name)).unwrap();
            assert_eq!(lhs, rhs, "{name} differs between identical runs");
        }
    }

    #[test]
    fn c2w_roundtrips_through_the_camera_builder() {
        let cam = Camera::look_at(
            [1.2, -0.7, -2.0],
            [0.1, 0.0, 0.3],
            [0.0, 1.0, 0.0],
            30.0,
            30.0,
            32,
            32,
        )
        .unwrap();
        let angle = 2.0 * (0.5 * 32.0 / 30.0f64).atan();
        let back = Camera::from_c2w(c2w_matrix(&cam), angle, 32, 32).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((back.rotation[i][j] - cam.rotation[i][j]).abs() < 1e-6);
            }
            assert!((back.translation[i] - cam.translation[i]).abs() < 1e-5);
        }
        assert!((back.fx - cam.fx).abs() < 1e-3);
    }

    #[test]
    fn missing_split_is_an_error_only_when_required() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_split(dir.path(), "train", [0.0; 3]).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(load_split_optional(dir.path(), "test", [0.0; 3])
            .unwrap()
            .is_none());
    }
}
