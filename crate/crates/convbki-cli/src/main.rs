//! `convbki` — build, train, evaluate, and export semantic voxel maps.
//!
//! Exit codes: 0 on success, 1 for usage errors (bad flags, bad
//! configuration), 2 for data errors (missing or malformed input files,
//! failures while processing them).

use clap::Parser;
use std::process::ExitCode;

mod commands;

#[derive(Parser)]
#[command(
    name = "convbki",
    version,
    about = "Semantic voxel mapping via convolutional Bayesian kernel inference"
)]
struct Cli {
    #[command(subcommand)]
    command: commands::Command,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // --help and --version arrive here too; they exit 0.
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };

    match cli.command.run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// Usage errors (1) vs. data errors (2), per the CLI contract.
fn exit_code(err: &convbki::Error) -> u8 {
    match err {
        convbki::Error::Config(_) => 1,
        convbki::Error::Frame { source, .. } => exit_code(source),
        _ => 2,
    }
}
