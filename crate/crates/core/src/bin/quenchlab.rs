use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use quenchlab::experiment::{exit_code, run_experiment, Command};
use quenchlab::parse_config;

/// Numerical experiments for a nonlocal diffusion system with singular
/// absorption.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Run configuration in `section.key = value` form.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Recorded in the manifest; every experiment is deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = parse_config(&cli.config).and_then(|mut cfg| {
        if let Some(out) = cli.out {
            cfg.output_dir = out;
        }
        run_experiment(&cfg, cli.command, cli.seed)
    });
    match result {
        Ok(summary) => {
            println!("{}", summary.manifest.display());
            ExitCode::from(summary.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
