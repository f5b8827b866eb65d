//! Drive the experiment runner from code: validate a config, run it, read the summary.
//! The same configs run from the command line with `hysteresis run --config <file>`;
//! see `examples/configs/`.
//!
//! cargo run --release --example run_config

use dimer_hysteresis::experiment::{self, ExperimentConfig};

fn main() -> dimer_hysteresis::Result<()> {
    let mut cfg = ExperimentConfig::from_toml(include_str!("configs/final_split.toml"))?;
    cfg.output_dir = std::env::temp_dir().join("hysteresis-example");
    let plan = experiment::validate(&cfg)?;
    println!("dimension {:?}, about {:.1} s", plan.dimension, plan.estimated_seconds.unwrap_or(0.0));
    let report = experiment::run(&cfg)?;
    println!("status {:?}, outputs in {}", report.status, report.output_dir.display());
    for (k, v) in &report.summary.metrics {
        println!("  {k} = {v:.6}");
    }
    Ok(())
}
