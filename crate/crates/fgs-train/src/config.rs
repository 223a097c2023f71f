//! Training hyper-parameters and their flat key=value representation.

use crate::error::TrainError;

/// Everything the trainer needs besides the model and the views.
///
/// The defaults are tuned for full scene fits; small synthetic scenes
/// usually lower `steps` and let the coordinate freeze point follow.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Total optimization steps.
    pub steps: usize,
    /// Step after which coordinate factors stop updating. `None` picks
    /// `min(20000, 2 * steps / 3)` at train time.
    pub freeze_coordinates_at: Option<usize>,
    /// Learning rate for coordinate and attribute factor arrays.
    pub lr_factors: f32,
    /// Learning rate for decoder weights and biases.
    pub lr_decoder: f32,
    /// Learning rate for mask grid values.
    pub lr_mask: f32,
    /// Ratio of the final learning rate to the initial one. Rates decay
    /// exponentially toward it over the run; 1 keeps them constant.
    pub lr_decay: f32,
    /// Weight of the structural term in the image loss; the remainder
    /// goes to mean absolute error.
    pub lambda_dssim: f32,
    /// Weight of the mask sparsity regularizer.
    pub lambda_mask: f32,
    /// Threshold used when binarizing mask values.
    pub mask_threshold: f32,
    /// Initial value for trainable mask grids.
    pub mask_init: f32,
    /// Opacity below which a gaussian is dropped by the prune operation.
    pub prune_alpha: f32,
    /// Background color composited behind the splats.
    pub background: [f32; 3],
    /// Splats with blended contribution below this are skipped.
    pub alpha_cutoff: f32,
    /// Side length of the rasterizer work tiles, in pixels.
    pub tile_size: usize,
    /// Per-pixel transmittance below which blending stops early.
    pub transmittance_floor: f32,
    /// Evaluate held-out views every this many steps (0 disables).
    pub eval_every: usize,
    /// Record a metrics row every this many steps.
    pub log_every: usize,
    /// Seed for view shuffling and any stochastic initialization.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 30_000,
            freeze_coordinates_at: None,
            lr_factors: 0.02,
            lr_decoder: 0.001,
            lr_mask: 0.01,
            lr_decay: 1.0,
            lambda_dssim: 0.2,
            lambda_mask: 5e-4,
            mask_threshold: 0.01,
            mask_init: 0.1,
            prune_alpha: 0.001,
            background: [1.0, 1.0, 1.0],
            alpha_cutoff: 1.0 / 255.0,
            tile_size: 16,
            transmittance_floor: 1e-4,
            eval_every: 500,
            log_every: 50,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Step at which coordinate factors freeze, after applying the
    /// default rule when unset.
    pub fn freeze_step(&self) -> usize {
        self.freeze_coordinates_at
            .unwrap_or_else(|| (2 * self.steps / 3).min(20_000))
    }

    /// Multiplier applied to every learning rate at the given step.
    pub fn lr_scale(&self, step: usize) -> f32 {
        if self.lr_decay == 1.0 {
            return 1.0;
        }
        self.lr_decay.powf(step as f32 / self.steps.max(1) as f32)
    }

    /// Every setting as `(key, value)` strings, in a fixed order. Feeding
    /// the pairs back through [`TrainConfig::apply`] reproduces the
    /// config, so this is the snapshot format for run manifests.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut pairs: Vec<(String, String)> = vec![
            ("steps".into(), self.steps.to_string()),
            ("lr_factors".into(), self.lr_factors.to_string()),
            ("lr_decoder".into(), self.lr_decoder.to_string()),
            ("lr_mask".into(), self.lr_mask.to_string()),
            ("lr_decay".into(), self.lr_decay.to_string()),
            ("lambda_dssim".into(), self.lambda_dssim.to_string()),
            ("lambda_mask".into(), self.lambda_mask.to_string()),
            ("mask_threshold".into(), self.mask_threshold.to_string()),
            ("mask_init".into(), self.mask_init.to_string()),
            ("prune_alpha".into(), self.prune_alpha.to_string()),
            (
                "background".into(),
                format!(
                    "{},{},{}",
                    self.background[0], self.background[1], self.background[2]
                ),
            ),
            ("alpha_cutoff".into(), self.alpha_cutoff.to_string()),
            ("tile_size".into(), self.tile_size.to_string()),
            ("transmittance_floor".into(), self.transmittance_floor.to_string()),
            ("eval_every".into(), self.eval_every.to_string()),
            ("log_every".into(), self.log_every.to_string()),
            ("seed".into(), self.seed.to_string()),
        ];
        if let Some(at) = self.freeze_coordinates_at {
            pairs.insert(1, ("freeze_coordinates_at".into(), at.to_string()));
        }
        pairs
    }

    /// Applies one `key=value` assignment. Unknown keys and unparsable
    /// values are rejected so config file typos surface immediately.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), TrainError> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, TrainError> {
            value.trim().parse().map_err(|_| {
                TrainError::InvalidConfig(format!("bad value {value:?} for key {key:?}"))
            })
        }
        match key {
            "steps" => self.steps = num(key, value)?,
            "freeze_coordinates_at" => self.freeze_coordinates_at = Some(num(key, value)?),
            "lr_factors" => self.lr_factors = num(key, value)?,
            "lr_decoder" => self.lr_decoder = num(key, value)?,
            "lr_mask" => self.lr_mask = num(key, value)?,
            "lr_decay" => self.lr_decay = num(key, value)?,
            "lambda_dssim" => self.lambda_dssim = num(key, value)?,
            "lambda_mask" => self.lambda_mask = num(key, value)?,
            "mask_threshold" => self.mask_threshold = num(key, value)?,
            "mask_init" => self.mask_init = num(key, value)?,
            "prune_alpha" => self.prune_alpha = num(key, value)?,
            "background" => {
                let parts: Vec<&str> = value.split(',').collect();
                if parts.len() != 3 {
                    return Err(TrainError::InvalidConfig(format!(
                        "background wants three comma separated channels, got {value:?}"
                    )));
                }
                for (slot, part) in self.background.iter_mut().zip(&parts) {
                    *slot = num(key, part)?;
                }
            }
            "alpha_cutoff" => self.alpha_cutoff = num(key, value)?,
            "tile_size" => self.tile_size = num(key, value)?,
            "transmittance_floor" => self.transmittance_floor = num(key, value)?,
            "eval_every" => self.eval_every = num(key, value)?,
            "log_every" => self.log_every = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            other => {
                return Err(TrainError::InvalidConfig(format!(
                    "unknown config key {other:?}"
                )))
            }
        }
        Ok(())
    }

    /// Builds a config from `key=value` lines, starting from defaults.
    /// Blank lines and lines starting with `#` are skipped.
    pub fn from_lines<'a>(lines: impl IntoIterator<Item = &'a str>) -> Result<Self, TrainError> {
        let mut config = Self::default();
        for raw in lines {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                TrainError::InvalidConfig(format!("expected key=value, got {line:?}"))
            })?;
            config.apply(key.trim(), value)?;
        }
        config.validate()?;
        Ok(config)
    }

    /// Rejects values a training run cannot work with.
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(0.0..=1.0).contains(&self.lambda_dssim) {
            return Err(TrainError::InvalidConfig(format!(
                "lambda_dssim must lie in [0, 1], got {}",
                self.lambda_dssim
            )));
        }
        for (name, lr) in [
            ("lr_factors", self.lr_factors),
            ("lr_decoder", self.lr_decoder),
            ("lr_mask", self.lr_mask),
        ] {
            if !lr.is_finite() || lr < 0.0 {
                return Err(TrainError::InvalidConfig(format!(
                    "{name} must be finite and non-negative, got {lr}"
                )));
            }
        }
        if !self.lr_decay.is_finite() || self.lr_decay <= 0.0 {
            return Err(TrainError::InvalidConfig(format!(
                "lr_decay must be finite and positive, got {}",
                self.lr_decay
            )));
        }
        if !self.lambda_mask.is_finite() || self.lambda_mask < 0.0 {
            return Err(TrainError::InvalidConfig(format!(
                "lambda_mask must be finite and non-negative, got {}",
                self.lambda_mask
            )));
        }
        if !self.mask_threshold.is_finite() {
            return Err(TrainError::InvalidConfig("mask_threshold must be finite".into()));
        }
        if self.tile_size == 0 {
            return Err(TrainError::InvalidConfig("tile_size must be positive".into()));
        }
        if self.background.iter().any(|c| !c.is_finite()) {
            return Err(TrainError::InvalidConfig(format!(
                "background must be finite, got {:?}",
                self.background
            )));
        }
        if self.log_every == 0 {
            return Err(TrainError::InvalidConfig("log_every must be positive".into()));
        }
        Ok(())
    }
}
