//! Command-line runner for experiment configs.
//!
//! Exit codes: 0 success, 1 invalid config, 2 compute failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dimer_hysteresis::experiment::{self, RunReport};
use dimer_hysteresis::Error;

#[derive(Parser)]
#[command(name = "hysteresis", version, about = "Run sweep experiments from a TOML config")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run(Common),
    /// Run the experiment once per `scan_values` entry of `scan_axis`.
    Scan(Common),
    /// Check the config and estimate the work without computing anything.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (overrides `workers`).
    #[arg(long)]
    workers: Option<usize>,
    /// Seed for classical sampling (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    quiet: bool,
}

fn is_validation(e: &Error) -> bool {
    matches!(e, Error::Config(_) | Error::InvalidParameter { .. } | Error::Domain { .. })
}

fn report(r: &RunReport, quiet: bool) -> ExitCode {
    if !quiet {
        eprintln!("output: {}", r.output_dir.display());
        for (k, v) in &r.summary.metrics {
            eprintln!("  {k} = {v}");
        }
        for (k, v) in &r.summary.labels {
            eprintln!("  {k}: {v}");
        }
    }
    if let Some(e) = &r.error {
        eprintln!("error: {e}");
    }
    if r.failed {
        if r.error.is_none() {
            eprintln!("error: failure rate {:.3} above threshold", r.failure_rate);
        }
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (Command::Run(c) | Command::Scan(c) | Command::Validate(c)) = &cli.command;
    let cfg = match experiment::load_config(&c.config, c.out.clone(), c.workers, c.seed) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let result = match &cli.command {
        Command::Run(_) => experiment::run(&cfg).map(|r| report(&r, c.quiet)),
        Command::Scan(_) => experiment::scan(&cfg).map(|r| report(&r, c.quiet)),
        Command::Validate(_) => experiment::validate(&cfg).map(|v| {
            println!("{}", serde_json::to_string_pretty(&v).expect("report serializes"));
            ExitCode::SUCCESS
        }),
    };
    match result {
        Ok(code) => code,
        Err(e) if is_validation(&e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
