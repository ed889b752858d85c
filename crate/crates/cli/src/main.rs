//! `monorare run|compare|bootstrap|volume --config <path> [--jobs N] [--out DIR]`
//!
//! Summaries go to stdout as JSON; files land in `--out`. Failures print a
//! JSON error object on stderr and exit with 2 (configuration) or 3 (runtime).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use monorare::harness::{
    cmd_bootstrap, cmd_compare, cmd_run, cmd_volume, parse_volume_request, with_jobs, HarnessError, HarnessResult,
    Study, SEED_ENV,
};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "monorare", version, about = "Bounds and estimates of rare-event probabilities for monotone models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Worker threads for replications (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// One sequential run: estimate.json and trajectory.csv.
    Run(Common),
    /// Replicated comparison against plain Monte Carlo.
    Compare(Common),
    /// Surrogate bootstrap bias correction of one run.
    Bootstrap(Common),
    /// Exact and Monte Carlo volume of a union of lower orthants.
    Volume(Common),
}

fn emit<T: Serialize>(value: &T) -> HarnessResult<()> {
    println!("{}", serde_json::to_string_pretty(value).expect("summary serializes"));
    Ok(())
}

fn execute(cli: Cli) -> HarnessResult<()> {
    let env_seed = std::env::var(SEED_ENV).ok();
    let env_seed = env_seed.as_deref();
    match cli.command {
        Command::Run(c) => {
            let study = Study::from_path(&c.config, env_seed)?;
            with_jobs(c.jobs, || cmd_run(&study, &c.out))?.and_then(|e| emit(&e))
        }
        Command::Compare(c) => {
            let study = Study::from_path(&c.config, env_seed)?;
            with_jobs(c.jobs, || cmd_compare(&study, Some(&c.out)))?.and_then(|r| emit(&r))
        }
        Command::Bootstrap(c) => {
            let study = Study::from_path(&c.config, env_seed)?;
            let report = with_jobs(c.jobs, || cmd_bootstrap(&study, Some(&c.out)))??;
            // The replicate list is in bootstrap.json; keep stdout short.
            emit(&serde_json::json!({
                "p_hat": report.p_hat,
                "corrected_p": report.corrected_p,
                "bias_hat": report.bias_hat,
                "surrogate_p": report.surrogate_p,
                "train_error": report.train_error,
                "bound_lower": report.bound_lower,
                "bound_upper": report.bound_upper,
            }))
        }
        Command::Volume(c) => {
            let text = std::fs::read_to_string(&c.config)
                .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", c.config.display())))?;
            let req = parse_volume_request(&text, env_seed)?;
            cmd_volume(&req, Some(&c.out)).and_then(|r| emit(&r))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = HarnessError::Config(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", err.to_json());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
