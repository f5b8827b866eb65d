//! Configuration-driven runs: one experiment kind per config, scans over one parameter,
//! and dry-run validation with a resource estimate.
//!
//! Every data file lands in the output directory through [`OutputDir`], which records
//! its checksum for the manifest written last.

mod config;
mod kinds;
mod manifest;

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

pub use config::{ExperimentConfig, ExperimentKind, Method, ScanAxis, SCHEMA_VERSION};
pub use kinds::{regime, RunSummary};
pub use manifest::{sha256_hex, write_atomic, FileRecord, OutputDir, RunManifest, RunStatus, StageTiming, MANIFEST_NAME};

use crate::error::{Error, Result};

/// Outcome of `run` or `scan`. Validation problems are returned as errors instead.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub output_dir: PathBuf,
    pub status: RunStatus,
    pub failure_rate: f64,
    /// Compute failure, or failure rate above `max_failure_rate`.
    pub failed: bool,
    pub error: Option<String>,
    pub summary: RunSummary,
}

fn config_hash(cfg: &ExperimentConfig) -> String {
    sha256_hex(cfg.to_toml().as_bytes())
}

fn in_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("field `workers`: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn new_manifest(cfg: &ExperimentConfig, started: f64) -> RunManifest {
    RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        kind: cfg.kind.name().into(),
        config_hash: config_hash(cfg),
        seed: cfg.seed,
        started_unix: started,
        finished_unix: started,
        stages: Vec::new(),
        files: Vec::new(),
        status: RunStatus::Ok,
        failure_rate: 0.0,
        error: None,
    }
}

/// Run a single experiment into `cfg.output_dir`. Scan fields are ignored.
pub fn run(cfg: &ExperimentConfig) -> Result<RunReport> {
    let cfg = ExperimentConfig { scan_axis: None, scan_values: Vec::new(), ..cfg.clone() };
    cfg.validate()?;
    let started = manifest::unix_seconds();
    let mut out = OutputDir::create(&cfg.output_dir)?;
    out.write("config.toml", cfg.to_toml().as_bytes())?;
    let result = in_pool(cfg.workers, || kinds::execute(&cfg))?;
    let mut m = new_manifest(&cfg, started);
    let report = match result {
        Ok(art) => {
            for (name, bytes) in &art.files {
                out.write(name, bytes)?;
            }
            m.stages = art.stages;
            finish(&cfg, art.summary, None)
        }
        Err(e) => finish(&cfg, RunSummary { kind: cfg.kind.name().into(), ..RunSummary::default() }, Some(e.to_string())),
    };
    m.status = report.status;
    m.failure_rate = report.failure_rate;
    m.error = report.error.clone();
    m.finished_unix = manifest::unix_seconds();
    out.write_manifest(&m)?;
    Ok(report)
}

fn finish(cfg: &ExperimentConfig, summary: RunSummary, error: Option<String>) -> RunReport {
    let failure_rate = if error.is_some() { 1.0 } else { summary.failure_rate() };
    let failed = error.is_some() || failure_rate > cfg.max_failure_rate;
    RunReport {
        output_dir: cfg.output_dir.clone(),
        status: if failed { RunStatus::Failed } else { RunStatus::Ok },
        failure_rate,
        failed,
        error,
        summary,
    }
}

fn point_dir(index: usize, axis: ScanAxis, value: f64) -> String {
    format!("points/{index:03}_{}_{value}", axis.name())
}

/// Run the config once per `scan_values` entry, in parallel. Each point's files go to
/// `points/<index>_<axis>_<value>/`; `scan.csv` collects their summaries. A failing
/// point is recorded and does not affect the others.
pub fn scan(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let axis = cfg.scan_axis.ok_or_else(|| Error::Config("field `scan_axis`: required for scan".into()))?;
    if cfg.scan_values.is_empty() {
        return Err(Error::Config("field `scan_values`: must not be empty".into()));
    }
    let points: Vec<ExperimentConfig> =
        cfg.scan_values.iter().map(|&v| cfg.with_axis(axis, v)).collect::<Result<_>>()?;
    let started = manifest::unix_seconds();
    let mut out = OutputDir::create(&cfg.output_dir)?;
    out.write("config.toml", cfg.to_toml().as_bytes())?;
    let results = in_pool(cfg.workers, || points.par_iter().map(kinds::execute).collect::<Vec<_>>())?;

    let mut m = new_manifest(cfg, started);
    let mut rows = Vec::new();
    let mut failures = 0;
    for (k, (point, result)) in points.iter().zip(results).enumerate() {
        let value = cfg.scan_values[k];
        let dir = point_dir(k, axis, value);
        out.write(&format!("{dir}/config.toml"), point.to_toml().as_bytes())?;
        match result {
            Ok(art) => {
                for (name, bytes) in &art.files {
                    out.write(&format!("{dir}/{name}"), bytes)?;
                }
                m.stages.extend(art.stages.into_iter().map(|s| StageTiming { name: format!("{dir}/{}", s.name), ..s }));
                let r = finish(point, art.summary, None);
                failures += r.failed as usize;
                rows.push((value, r));
            }
            Err(e) => {
                failures += 1;
                let msg = e.to_string();
                out.write(&format!("{dir}/error.txt"), format!("{msg}\n").as_bytes())?;
                rows.push((value, finish(point, RunSummary { kind: cfg.kind.name().into(), ..RunSummary::default() }, Some(msg))));
            }
        }
    }
    out.write("scan.csv", &scan_table(axis, &rows)?)?;

    let failure_rate = failures as f64 / rows.len() as f64;
    let failed = failure_rate > cfg.max_failure_rate;
    let error = (failures > 0).then(|| format!("{failures} of {} scan points failed", rows.len()));
    m.status = if failed { RunStatus::Failed } else { RunStatus::Ok };
    m.failure_rate = failure_rate;
    m.error = error.clone();
    m.finished_unix = manifest::unix_seconds();
    out.write_manifest(&m)?;
    Ok(RunReport {
        output_dir: cfg.output_dir.clone(),
        status: m.status,
        failure_rate,
        failed,
        error,
        summary: RunSummary { kind: cfg.kind.name().into(), attempted: rows.len(), failed: failures, ..RunSummary::default() },
    })
}

fn scan_table(axis: ScanAxis, rows: &[(f64, RunReport)]) -> Result<Vec<u8>> {
    let mut metrics: Vec<&String> = rows.iter().flat_map(|r| r.1.summary.metrics.keys()).collect();
    metrics.sort();
    metrics.dedup();
    let mut labels: Vec<&String> = rows.iter().flat_map(|r| r.1.summary.labels.keys()).collect();
    labels.sort();
    labels.dedup();
    let mut buf = Vec::new();
    write!(buf, "{},status,failure_rate", axis.name())?;
    for k in metrics.iter().chain(&labels) {
        write!(buf, ",{k}")?;
    }
    writeln!(buf)?;
    for (v, r) in rows {
        let status = if r.error.is_some() { "error" } else if r.failed { "failed" } else { "ok" };
        write!(buf, "{v},{status},{:.6e}", r.failure_rate)?;
        for k in &metrics {
            match r.summary.metrics.get(*k) {
                Some(x) => write!(buf, ",{x:.12e}")?,
                None => write!(buf, ",")?,
            }
        }
        for k in &labels {
            let text = r.summary.labels.get(*k).map_or(String::new(), |s| s.replace(',', ";"));
            write!(buf, ",{text}")?;
        }
        writeln!(buf)?;
    }
    Ok(buf)
}

/// Dry-run description of the work a config asks for.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub kind: String,
    pub dimension: Option<usize>,
    pub grid_points: usize,
    pub snapshots: Option<usize>,
    pub half_times: usize,
    pub scan_points: usize,
    /// Exact propagations per scan point.
    pub trajectories: usize,
    /// Steps of the slowest single trajectory.
    pub estimated_steps: Option<f64>,
    /// Whole-config serial CPU time for the propagations.
    pub estimated_seconds: Option<f64>,
    pub warnings: Vec<String>,
}

/// A single propagation above this many seconds triggers the ICA recommendation.
const SLOW_TRAJECTORY_SECONDS: f64 = 3600.0;

/// Step count of the adaptive integrator for one full sweep, fitted to measured runs
/// (`u = -3`, `|delta| <= 2`): steps grow as `T^(3/4)` and `tolerance^(-1/4)`.
pub fn estimate_steps(n_particles: usize, half_time: f64, tolerance: f64) -> f64 {
    102.0 * (2.0 * half_time).powf(0.75) * (n_particles.max(1) as f64).powf(0.17) * (tolerance / 1e-9).powf(-0.25)
}

/// Serial seconds for one full-sweep propagation (same fit as [`estimate_steps`]).
pub fn estimate_seconds(n_particles: usize, half_time: f64, tolerance: f64) -> f64 {
    let matvecs_per_step = 17.0 + 0.066 * n_particles as f64;
    estimate_steps(n_particles, half_time, tolerance) * matvecs_per_step * (n_particles + 1) as f64 * 1.5e-8
}

pub fn validate(cfg: &ExperimentConfig) -> Result<ValidationReport> {
    use ExperimentKind::*;
    cfg.validate()?;
    let scan_points: Vec<ExperimentConfig> = match cfg.scan_axis {
        Some(axis) => cfg.scan_values.iter().map(|&v| cfg.with_axis(axis, v)).collect::<Result<_>>()?,
        None => vec![cfg.clone()],
    };
    let mut warnings = Vec::new();
    let mut total = 0.0;
    let mut worst: Option<f64> = None;
    let mut trajectories = 0;
    for p in &scan_points {
        let (count, forward_only, times): (usize, bool, Vec<f64>) = match (p.kind, p.method) {
            (SweepMap, _) => (1, false, p.half_time.into_iter().collect()),
            (FinalSplit, _) => (p.mixture_size, false, p.half_time.into_iter().collect()),
            (ReturnScan, Method::Exact) => (p.mixture_size, false, p.half_times.clone()),
            (IcaCompare, _) => (1, true, p.half_time.into_iter().collect()),
            _ => (0, false, Vec::new()),
        };
        trajectories = trajectories.max(count * times.len());
        let Some(n) = p.n_particles else { continue };
        for &tt in &times {
            let scale = if forward_only { 0.5f64.powf(0.75) } else { 1.0 };
            let steps = scale * estimate_steps(n, tt, p.tolerance);
            let secs = scale * estimate_seconds(n, tt, p.tolerance);
            if count > 0 {
                worst = Some(worst.map_or(steps, |w: f64| w.max(steps)));
                total += count as f64 * secs;
                if secs > SLOW_TRAJECTORY_SECONDS {
                    warnings.push(format!(
                        "direct propagation at N = {n}, T = {tt:e} needs about {steps:.1e} steps ({:.1e} s); \
                         consider the ICA surrogate (method = \"ica\")",
                        secs
                    ));
                }
            }
        }
        if matches!(p.kind, SpectrumScan | IcaCompare | Correspondence) || p.method == Method::Ica {
            if p.max_pair.is_none() && n >= 500 {
                warnings.push(format!("refining all {n} level pairs at N = {n} is slow; set max_pair"));
            }
        }
    }
    warnings.sort();
    warnings.dedup();
    Ok(ValidationReport {
        kind: cfg.kind.name().into(),
        dimension: cfg.n_particles.map(|n| n + 1),
        grid_points: cfg.grid_points,
        snapshots: (cfg.kind == SweepMap).then_some(cfg.snapshots),
        half_times: cfg.half_times.len().max(cfg.half_time.is_some() as usize),
        scan_points: scan_points.len(),
        trajectories,
        estimated_steps: worst,
        estimated_seconds: worst.map(|_| total),
        warnings,
    })
}

/// Load a config and apply command-line overrides.
pub fn load_config(
    path: &Path,
    output_dir: Option<PathBuf>,
    workers: Option<usize>,
    seed: Option<u64>,
) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(o) = output_dir {
        cfg.output_dir = o;
    }
    if workers.is_some() {
        cfg.workers = workers;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str, out: &Path) -> ExperimentConfig {
        let mut c = ExperimentConfig::from_toml(text).unwrap();
        c.output_dir = out.to_path_buf();
        c
    }

    const SPLIT: &str = r#"
schema_version = 1
kind = "final-split"
n_particles = 6
interaction_u = -3.0
delta_initial = -2.0
delta_turn = 2.0
half_time = 20.0
level = 1
tolerance = 1e-8
"#;

    fn manifest_covers_dir(dir: &Path) {
        let m: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join(MANIFEST_NAME)).unwrap()).unwrap();
        let listed: Vec<(String, String)> = m["files"]
            .as_array()
            .unwrap()
            .iter()
            .map(|f| (f["path"].as_str().unwrap().to_string(), f["sha256"].as_str().unwrap().to_string()))
            .collect();
        let mut on_disk = Vec::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for e in std::fs::read_dir(d).unwrap() {
                let p = e.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else if p.file_name().unwrap() != MANIFEST_NAME {
                    on_disk.push(p);
                }
            }
        }
        assert_eq!(on_disk.len(), listed.len());
        for p in on_disk {
            let rel = p.strip_prefix(dir).unwrap().to_string_lossy().replace('\\', "/");
            let sum = sha256_hex(&std::fs::read(&p).unwrap());
            assert!(listed.contains(&(rel.clone(), sum)), "{rel}");
        }
    }

    #[test]
    fn run_is_deterministic_and_fully_listed() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ra = run(&cfg(SPLIT, a.path())).unwrap();
        run(&cfg(SPLIT, b.path())).unwrap();
        assert_eq!(ra.status, RunStatus::Ok);
        for f in ["final_distribution.csv", "split.json", "summary.json"] {
            assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
        }
        manifest_covers_dir(a.path());
    }

    #[test]
    fn single_value_scan_matches_run() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run(&cfg(SPLIT, a.path())).unwrap();
        let mut s = cfg(SPLIT, b.path());
        s.scan_axis = Some(ScanAxis::T);
        s.scan_values = vec![20.0];
        let r = scan(&s).unwrap();
        assert!(!r.failed);
        let point = b.path().join(point_dir(0, ScanAxis::T, 20.0));
        for f in ["final_distribution.csv", "split.json", "summary.json"] {
            assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(point.join(f)).unwrap(), "{f}");
        }
        manifest_covers_dir(b.path());
    }

    #[test]
    fn failing_point_is_isolated() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = cfg(&SPLIT.replace("final-split", "classical-ensemble"), dir.path());
        s.level = None;
        s.samples = Some(16);
        s.n_particles = Some(100);
        s.half_time = Some(5.0);
        s.classical_energy = Some(-3.0);
        s.scan_axis = Some(ScanAxis::U);
        // no closed orbit at this energy for u = 0.5: the minimum lies above it
        s.scan_values = vec![-3.0, 0.5];
        let r = scan(&s).unwrap();
        assert!(r.failed);
        assert_eq!(r.summary.failed, 1);
        let table = std::fs::read_to_string(dir.path().join("scan.csv")).unwrap();
        let lines: Vec<&str> = table.lines().collect();
        assert!(lines[1].starts_with("-3,ok"), "{table}");
        assert!(lines[2].starts_with("0.5,error"), "{table}");
        manifest_covers_dir(dir.path());
    }

    #[test]
    fn validation_estimates() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = cfg(&SPLIT.replace("final-split", "sweep-map"), dir.path());
        c.n_particles = Some(1000);
        let r = validate(&c).unwrap();
        assert_eq!(r.dimension, Some(1001));
        assert_eq!(r.snapshots, Some(100));
        assert!(r.warnings.is_empty());
        c.half_time = Some(1e8);
        let r = validate(&c).unwrap();
        assert!(r.warnings.iter().any(|w| w.contains("ICA")), "{:?}", r.warnings);
        assert!(!dir.path().join(MANIFEST_NAME).exists());
    }

    #[test]
    fn step_estimate_tracks_measurements() {
        // measured: N = 100, T = 1000 -> 66824 steps at 1e-9, 11860 at 1e-6
        assert!((estimate_steps(100, 1000.0, 1e-9) / 66824.0 - 1.0).abs() < 0.1);
        assert!((estimate_steps(100, 1000.0, 1e-6) / 11860.0 - 1.0).abs() < 0.1);
    }
}
