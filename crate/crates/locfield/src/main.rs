//! `locfield` — local likelihood estimation for nonstationary Gaussian
//! random fields, one pipeline per process.
//!
//! Verbosity is controlled by the `LOCFIELD_LOG` environment variable
//! (`error`, `info`, or `debug`; default `info`). Exit codes: `0` success,
//! `2` configuration error, `3` numerical failure.

use clap::{Args, Parser, Subcommand};
use locfield::commands;
use locfield::config::{preset, ExperimentConfig, PRESET_NAMES};
use locfield::error::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "locfield",
    version,
    about = "Weighted local likelihood estimation for nonstationary Gaussian random fields",
    after_help = "Built-in presets (usable as --config): fig1 fig2 fig3 fig4 fig5 fig6.\n\
                  Set LOCFIELD_LOG=error|info|debug to control verbosity."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file path, or the name of a built-in preset
    #[arg(long)]
    config: String,
    /// Output directory (overrides the config's `out`; default `locfield-out`)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed (overrides the config's `seed`)
    #[arg(long)]
    seed: Option<u64>,
    /// Cap on worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SelftestArgs {
    /// Optionally also schema-check this configuration file or preset
    #[arg(long)]
    config: Option<String>,
    /// Cap on worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset from the configured model
    Simulate(RunArgs),
    /// Fit the local parameter surface on an estimation grid
    Estimate(RunArgs),
    /// Profile the bandwidth selectors over a candidate grid
    Bandwidth(RunArgs),
    /// Evaluate exact Bayes risk (curves or a kernel-comparison heat map)
    #[command(name = "bayes-risk")]
    BayesRisk(RunArgs),
    /// Run the internal consistency checks and print a pass/fail table
    Selftest(SelftestArgs),
}

fn cap_threads(threads: Option<usize>) -> Result<(), Error> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot configure {n} threads: {e}")))?;
    }
    Ok(())
}

fn run_pipeline(
    args: &RunArgs,
    f: impl FnOnce(&ExperimentConfig, &std::path::Path, u64) -> Result<(), Error>,
) -> Result<(), Error> {
    cap_threads(args.threads)?;
    let cfg = ExperimentConfig::resolve(&args.config)?;
    let seed = args.seed.unwrap_or(cfg.seed);
    let out = args
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("locfield-out"));
    f(&cfg, &out, seed)
}

fn run(cli: Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Simulate(a) => run_pipeline(a, commands::cmd_simulate),
        Command::Estimate(a) => run_pipeline(a, commands::cmd_estimate),
        Command::Bandwidth(a) => run_pipeline(a, commands::cmd_bandwidth),
        Command::BayesRisk(a) => run_pipeline(a, commands::cmd_bayes_risk),
        Command::Selftest(a) => {
            cap_threads(a.threads)?;
            if let Some(c) = &a.config {
                // A selftest with a config doubles as a schema check.
                ExperimentConfig::resolve(c)?;
                println!("PASS  configuration `{c}` parses cleanly");
            }
            if commands::cmd_selftest()? {
                Ok(())
            } else {
                Err(Error::Numerical("self-test failed".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("LOCFIELD_LOG", "info"),
    )
    .format_timestamp(None)
    .init();

    // Referenced so the preset list in the help text can't go stale silently.
    debug_assert!(PRESET_NAMES.iter().all(|n| preset(n).is_some()));

    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("configuration error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("numerical failure: {e}");
            ExitCode::from(3)
        }
    }
}
