//! Entry point of the `fgs` binary.

use clap::Parser;

fn main() {
    let cli = fgs_cli::Cli::parse();
    if let Err(err) = fgs_cli::run(cli.command) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
