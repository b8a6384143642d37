//! `aging-bus <kind> --config <file> [--seed N] [--workers K] [--out DIR]`
//!
//! Exits 0 when every assertion of the run passes, 1 when one fails and 2
//! on invalid input.

use std::path::PathBuf;
use std::process::ExitCode;

use agingbus_core::experiments::{run, ExperimentConfig, ExperimentKind, RunOptions};
use clap::Parser;

#[derive(Debug, Parser)]
#[command(
    name = "aging-bus",
    version,
    about = "Seeded experiments on aging branching processes and bus lines"
)]
struct Cli {
    /// Experiment kind; must match the config's `kind`.
    #[arg(value_parser = parse_kind)]
    kind: ExperimentKind,
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_kind(s: &str) -> Result<ExperimentKind, String> {
    ExperimentKind::from_name(s).ok_or_else(|| {
        let names: Vec<_> = ExperimentKind::ALL.iter().map(|k| k.name()).collect();
        format!("unknown kind `{s}`; expected one of {}", names.join(", "))
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match ExperimentConfig::from_file(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", cli.config.display());
            return ExitCode::from(2);
        }
    };
    if config.kind != cli.kind {
        eprintln!("error: config is for `{}`, not `{}`", config.kind, cli.kind);
        return ExitCode::from(2);
    }
    let options = RunOptions {
        workers: cli.workers,
        seed: cli.seed,
        out_dir: cli.out,
    };
    let (manifest, output) = match run(&config, &options) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    for a in &output.assertions {
        println!("{a}");
    }
    if output.failures > 0 {
        println!("replicates lost to overflow: {}", output.failures);
    }
    let dir = manifest
        .config
        .output
        .as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_default();
    let verdict = if output.passed() { "PASS" } else { "FAIL" };
    println!(
        "{verdict} {} ({:.1} s) -> {dir}",
        manifest.config.kind, manifest.wall_clock_seconds
    );
    if output.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
