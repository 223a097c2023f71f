//! Command-line toolkit around the factorized-splatting crates.
//!
//! One binary, `fgs`, covers the whole workflow: seeding a model from a
//! point cloud (`init`, `fit-points`), optimizing it against a scene
//! (`train`), and inspecting the result (`render`, `evaluate`, `prune`,
//! `report`). `gen-toy` writes a self-contained synthetic scene to
//! exercise the pipeline end to end.
//!
//! Every failure carries one of three exit codes: 2 for bad arguments,
//! 3 for missing or malformed data, 4 for numerical failure.

pub mod args;
pub mod error;
pub mod manifest;
pub mod ops;
pub mod scene;
pub mod setup;
pub mod training;

pub use args::{Cli, Command};
pub use error::CliError;

/// Runs one parsed subcommand.
pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Init(args) => setup::run_init(&args),
        Command::FitPoints(args) => setup::run_fit_points(&args),
        Command::Train(args) => training::run_train(&args),
        Command::Render(args) => ops::run_render(&args),
        Command::Evaluate(args) => ops::run_evaluate(&args),
        Command::Prune(args) => ops::run_prune(&args),
        Command::Report(args) => ops::run_report(&args),
        Command::GenToy(args) => scene::run_gen_toy(&args),
    }
}
