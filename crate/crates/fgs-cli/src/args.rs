//! Command-line surface of the `fgs` binary.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fgs_core::factor::VmMode;
use fgs_core::init::{DEFAULT_EXPAND, DEFAULT_INTERVAL, DEFAULT_LAMBDA};
use fgs_core::model::Scheme;

/// Factorized 3D Gaussian splatting toolkit.
#[derive(Debug, Parser)]
#[command(name = "fgs", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a model from a point cloud.
    Init(InitArgs),
    /// Fit factor coordinates to a point cloud, without rendering.
    FitPoints(FitPointsArgs),
    /// Optimize a model against a scene's training views.
    Train(TrainArgs),
    /// Render one view of a model to a PNG.
    Render(RenderArgs),
    /// Score a model against a scene split.
    Evaluate(EvaluateArgs),
    /// Switch off cells whose decoded opacity falls below a floor.
    Prune(PruneArgs),
    /// Print storage statistics for a model file.
    Report(ReportArgs),
    /// Generate a small synthetic scene with ground-truth images.
    GenToy(GenToyArgs),
}

/// Factorization scheme for freshly built models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Cp,
    Vm,
}

impl From<SchemeArg> for Scheme {
    fn from(arg: SchemeArg) -> Self {
        match arg {
            SchemeArg::Cp => Scheme::Cp,
            SchemeArg::Vm => Scheme::Vm,
        }
    }
}

/// How the three vector-matrix terms combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VmModeArg {
    /// Every term expands its own grid of Gaussians.
    Product,
    /// The terms sum into one shared grid of features.
    Shared,
}

impl From<VmModeArg> for VmMode {
    fn from(arg: VmModeArg) -> Self {
        match arg {
            VmModeArg::Product => VmMode::PerTermProduct,
            VmModeArg::Shared => VmMode::SharedGridSum,
        }
    }
}

/// Shape of a freshly built model.
#[derive(Debug, Clone, Args)]
pub struct ShapeArgs {
    /// Factorization scheme.
    #[arg(long, value_enum, ignore_case = true, default_value_t = SchemeArg::Cp)]
    pub scheme: SchemeArg,
    /// Term combination under the vm scheme.
    #[arg(long, value_enum, ignore_case = true, default_value_t = VmModeArg::Product)]
    pub vm_mode: VmModeArg,
    /// Per-axis resolution N; each block addresses N^3 Gaussians.
    #[arg(short = 'N', long = "resolution", default_value_t = 5)]
    pub resolution: usize,
    /// Feature channels per Gaussian fed to the decoder.
    #[arg(short = 'd', long = "feature-dim", default_value_t = 16)]
    pub feature_dim: usize,
    /// Decoder hidden width. Defaults to 128 under cp (one hidden
    /// layer) and 64 under vm (two hidden layers).
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Mask binarization threshold.
    #[arg(long, default_value_t = 0.01)]
    pub mask_threshold: f32,
}

#[derive(Debug, Args)]
pub struct InitArgs {
    /// Point cloud that seeds the model.
    #[arg(long)]
    pub ply: PathBuf,
    /// Histogram bin width in world units.
    #[arg(long, default_value_t = DEFAULT_INTERVAL)]
    pub interval: f64,
    /// Bounding-box expansion applied before binning.
    #[arg(long, default_value_t = DEFAULT_EXPAND)]
    pub expand: f64,
    /// Bins holding at most this many points get no blocks.
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda: u32,
    #[command(flatten)]
    pub shape: ShapeArgs,
    /// Place blocks uniformly at random inside the cloud's bounding box
    /// instead of over dense histogram bins. Requires --blocks.
    #[arg(long)]
    pub random: bool,
    /// Number of blocks for --random.
    #[arg(long)]
    pub blocks: Option<usize>,
    /// Seed for attribute and placement randomness.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output model path.
    #[arg(long, default_value = "model.f3gs")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitPointsArgs {
    /// Point cloud to cover.
    #[arg(long)]
    pub ply: PathBuf,
    /// Number of factor blocks.
    #[arg(long, default_value_t = 30)]
    pub blocks: usize,
    /// Per-axis resolution N of every block.
    #[arg(short = 'N', long = "resolution", default_value_t = 3)]
    pub resolution: usize,
    /// Optimization steps over the symmetric point-set distance.
    #[arg(long, default_value_t = 2000)]
    pub steps: usize,
    /// Learning rate for the coordinate updates.
    #[arg(long, default_value_t = 0.01)]
    pub lr: f32,
    /// Seed for block placement.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Decoder hidden width of the saved model.
    #[arg(long, default_value_t = 128)]
    pub hidden: usize,
    /// Mask binarization threshold of the saved model.
    #[arg(long, default_value_t = 0.01)]
    pub mask_threshold: f32,
    /// Output model path.
    #[arg(long, default_value = "model.f3gs")]
    pub out: PathBuf,
}

/// Where a fresh model's blocks come from when training starts without
/// an existing model file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitModeArg {
    /// Seed from the scene's point cloud when one exists, else random.
    Auto,
    /// Require the scene's point cloud.
    Points,
    /// Place blocks uniformly at random inside the scene bounds.
    Random,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Scene directory holding transforms_train.json and images/, plus
    /// optionally transforms_test.json and points.ply.
    #[arg(long)]
    pub scene: PathBuf,
    /// Existing model to continue training. Omit to build a fresh one
    /// from the scene.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub shape: ShapeArgs,
    /// Initialization mode for fresh models.
    #[arg(long, value_enum, ignore_case = true, default_value_t = InitModeArg::Auto)]
    pub init: InitModeArg,
    /// Histogram bin width for points-based initialization.
    #[arg(long, default_value_t = DEFAULT_INTERVAL)]
    pub interval: f64,
    /// Occupancy threshold for points-based initialization.
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda: u32,
    /// Block count for random initialization.
    #[arg(long, default_value_t = 8)]
    pub blocks: usize,
    /// Flat key=value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Config overrides applied after the file, e.g. --set steps=800.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Shortcut for --set steps=N.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Shortcut for --set seed=N.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run directory for the model, metrics and manifest.
    #[arg(long, default_value = "run")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Model file.
    pub model: PathBuf,
    /// Camera transforms JSON; the frame picks one view.
    #[arg(long)]
    pub camera: PathBuf,
    /// Frame index inside the transforms file.
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
    /// Output image width in pixels.
    #[arg(long, default_value_t = 800)]
    pub width: usize,
    /// Output image height in pixels.
    #[arg(long, default_value_t = 800)]
    pub height: usize,
    /// Background color as r,g,b in [0, 1].
    #[arg(long, default_value = "1,1,1", value_parser = parse_rgb)]
    pub background: Rgb,
    /// Output PNG path.
    #[arg(long, default_value = "render.png")]
    pub out: PathBuf,
}

/// Which transforms file of a scene to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

impl SplitArg {
    pub fn name(self) -> &'static str {
        match self {
            SplitArg::Train => "train",
            SplitArg::Test => "test",
        }
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Model file.
    pub model: PathBuf,
    /// Scene directory.
    #[arg(long)]
    pub scene: PathBuf,
    /// Scene split to score.
    #[arg(long, value_enum, ignore_case = true, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Background color as r,g,b in [0, 1].
    #[arg(long, default_value = "1,1,1", value_parser = parse_rgb)]
    pub background: Rgb,
}

#[derive(Debug, Args)]
pub struct PruneArgs {
    /// Model file to prune.
    pub model: PathBuf,
    /// Opacity floor; cells decoding below it are switched off.
    #[arg(long, default_value_t = 0.001)]
    pub alpha: f32,
    /// Output model path.
    #[arg(long, default_value = "pruned.f3gs")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Model file.
    pub model: PathBuf,
    /// Print machine-readable JSON instead of the table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct GenToyArgs {
    /// Scene directory to create.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of Gaussians in the ground-truth cloud.
    #[arg(long, default_value_t = 200)]
    pub gaussians: usize,
    /// Training views on the camera ring.
    #[arg(long, default_value_t = 20)]
    pub train_views: usize,
    /// Held-out views between the training ones.
    #[arg(long, default_value_t = 5)]
    pub test_views: usize,
    /// Image side length in pixels (square views).
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Focal length in pixels.
    #[arg(long, default_value_t = 70.0)]
    pub focal: f32,
    /// Camera ring radius.
    #[arg(long, default_value_t = 2.5)]
    pub radius: f32,
    /// Seed for the cloud and camera jitter.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Comma-separated RGB triple in [0, 1].
pub type Rgb = [f32; 3];

/// Parses `r,g,b` with each channel a finite float.
pub fn parse_rgb(value: &str) -> Result<Rgb, String> {
    let parts: Vec<&str> = value.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected r,g,b, got {value:?}"));
    }
    let mut rgb = [0.0f32; 3];
    for (slot, part) in rgb.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse::<f32>()
            .map_err(|_| format!("bad channel {part:?} in {value:?}"))?;
        if !slot.is_finite() {
            return Err(format!("channel {part:?} is not finite"));
        }
    }
    Ok(rgb)
}
