//! CLI error type; each variant fixes the process exit code.

use thiserror::Error;

use fgs_core::CoreError;
use fgs_render::RenderError;
use fgs_train::TrainError;

/// What went wrong, grouped by how the process should exit: 2 for bad
/// arguments or config values, 3 for missing or malformed data, 4 for
/// numerical failure during optimization or evaluation.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        match err {
            CoreError::NumericalFailure(_) => CliError::Numerical(err.to_string()),
            CoreError::InvalidArgument(_) => CliError::Usage(err.to_string()),
            _ => CliError::Data(err.to_string()),
        }
    }
}

impl From<RenderError> for CliError {
    fn from(err: RenderError) -> Self {
        match err {
            RenderError::NonFinite(_) => CliError::Numerical(err.to_string()),
            _ => CliError::Data(err.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(err: TrainError) -> Self {
        match err {
            TrainError::Core(inner) => inner.into(),
            TrainError::Render(inner) => inner.into(),
            TrainError::InvalidConfig(_) => CliError::Usage(err.to_string()),
            TrainError::NonFinite(_) => CliError::Numerical(err.to_string()),
            TrainError::ShapeMismatch(_) => CliError::Data(err.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Data(err.to_string())
    }
}
