//! TOML experiment configuration and its per-kind validation.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ica::IcaVariant;
use crate::model::{ModelParams, SweepProtocol};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SpectrumScan,
    GapVsN,
    Dos,
    SweepMap,
    FinalSplit,
    ReturnScan,
    IcaCompare,
    ClassicalEnsemble,
    Correspondence,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::SpectrumScan => "spectrum-scan",
            Self::GapVsN => "gap-vs-n",
            Self::Dos => "dos",
            Self::SweepMap => "sweep-map",
            Self::FinalSplit => "final-split",
            Self::ReturnScan => "return-scan",
            Self::IcaCompare => "ica-compare",
            Self::ClassicalEnsemble => "classical-ensemble",
            Self::Correspondence => "correspondence",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How a return probability is obtained in `return-scan`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Exact,
    Ica,
}

/// Parameter varied by `scan`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScanAxis {
    #[serde(rename = "N")]
    N,
    #[serde(rename = "T")]
    T,
    #[serde(rename = "u")]
    U,
    #[serde(rename = "level")]
    Level,
    #[serde(rename = "width")]
    Width,
}

impl ScanAxis {
    pub fn name(self) -> &'static str {
        match self {
            Self::N => "N",
            Self::T => "T",
            Self::U => "u",
            Self::Level => "level",
            Self::Width => "width",
        }
    }
}

impl FromStr for ScanAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "N" | "n" => Ok(Self::N),
            "T" | "t" => Ok(Self::T),
            "u" => Ok(Self::U),
            "level" => Ok(Self::Level),
            "width" => Ok(Self::Width),
            _ => Err(Error::Config(format!("field `scan_axis`: unknown axis `{s}` (N, T, u, level, width)"))),
        }
    }
}

fn default_omega() -> f64 {
    1.0
}
fn default_mixture_size() -> usize {
    1
}
fn default_grid_points() -> usize {
    401
}
fn default_energy_bins() -> usize {
    60
}
fn default_snapshots() -> usize {
    100
}
fn default_tolerance() -> f64 {
    1e-9
}
fn default_ensemble_dt() -> f64 {
    5e-3
}
fn default_variant() -> IcaVariant {
    IcaVariant::Improved
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// One experiment. Fields not used by `kind` are ignored; required ones are checked
/// by [`ExperimentConfig::validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub kind: ExperimentKind,

    pub n_particles: Option<usize>,
    pub interaction_u: Option<f64>,
    #[serde(default = "default_omega")]
    pub omega: f64,

    pub delta_initial: Option<f64>,
    pub delta_turn: Option<f64>,
    pub half_time: Option<f64>,
    #[serde(default)]
    pub half_times: Vec<f64>,

    /// `gap-vs-n` grids.
    #[serde(default)]
    pub n_values: Vec<usize>,
    #[serde(default)]
    pub u_values: Vec<f64>,

    /// Initial eigenstate (centre of the mixture).
    pub level: Option<usize>,
    /// Mixture centres for `correspondence`.
    #[serde(default)]
    pub levels: Vec<usize>,
    #[serde(default = "default_mixture_size")]
    pub mixture_size: usize,
    /// Classical orbit energy divided by `p0`, in units of `Omega`.
    pub classical_energy: Option<f64>,
    pub samples: Option<usize>,

    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    /// Highest adjacent pair refined by the spectrum scan (all by default).
    pub max_pair: Option<usize>,
    #[serde(default = "default_energy_bins")]
    pub energy_bins: usize,
    #[serde(default = "default_snapshots")]
    pub snapshots: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_ensemble_dt")]
    pub ensemble_dt: f64,
    #[serde(default = "default_variant")]
    pub variant: IcaVariant,
    #[serde(default)]
    pub method: Method,

    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Worker threads; `None` uses every available core.
    pub workers: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Largest tolerated fraction of failed samples or scan points.
    #[serde(default)]
    pub max_failure_rate: f64,

    pub scan_axis: Option<ScanAxis>,
    #[serde(default)]
    pub scan_values: Vec<f64>,
}

fn missing(field: &str, kind: ExperimentKind) -> Error {
    Error::Config(format!("field `{field}`: required for kind {kind}"))
}

fn bad(field: &str, reason: impl fmt::Display) -> Error {
    Error::Config(format!("field `{field}`: {reason}"))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(bad(
                "schema_version",
                format!("{} is not supported (expected {SCHEMA_VERSION})", cfg.schema_version),
            ));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Model parameters; `Config` error naming the first missing field.
    pub fn params(&self) -> Result<ModelParams> {
        let n = self.n_particles.ok_or_else(|| missing("n_particles", self.kind))?;
        let u = self.interaction_u.ok_or_else(|| missing("interaction_u", self.kind))?;
        ModelParams::with_omega(n, self.omega, u).map_err(|e| bad("n_particles/interaction_u/omega", e))
    }

    fn window(&self) -> Result<(f64, f64)> {
        let lo = self.delta_initial.ok_or_else(|| missing("delta_initial", self.kind))?;
        let hi = self.delta_turn.ok_or_else(|| missing("delta_turn", self.kind))?;
        if !(hi > lo) {
            return Err(bad("delta_turn", format!("{hi} must exceed delta_initial = {lo}")));
        }
        Ok((lo, hi))
    }

    /// Sweep protocol at `half_time`, or at the first entry of `half_times`.
    pub fn protocol(&self) -> Result<SweepProtocol> {
        let (lo, hi) = self.window()?;
        let tt = match (self.half_time, self.half_times.first()) {
            (Some(t), _) => t,
            (None, Some(&t)) => t,
            (None, None) => return Err(missing("half_time", self.kind)),
        };
        SweepProtocol::new(lo, hi, tt).map_err(|e| bad("half_time", e))
    }

    /// Check everything `kind` needs, before any heavy computation.
    pub fn validate(&self) -> Result<()> {
        use ExperimentKind::*;
        if !(self.omega > 0.0) {
            return Err(bad("omega", "must be positive"));
        }
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(bad("tolerance", "must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.max_failure_rate) {
            return Err(bad("max_failure_rate", "must lie in [0, 1]"));
        }
        if self.workers == Some(0) {
            return Err(bad("workers", "must be at least 1"));
        }
        if self.grid_points < 3 {
            return Err(bad("grid_points", "must be at least 3"));
        }
        if self.mixture_size == 0 {
            return Err(bad("mixture_size", "must be at least 1"));
        }
        if let Some(&t) = self.half_times.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(bad("half_times", format!("{t} is not a positive half time")));
        }
        match self.kind {
            GapVsN => {
                self.window()?;
                if self.n_values.is_empty() {
                    return Err(bad("n_values", "must not be empty"));
                }
                if self.u_values.is_empty() {
                    return Err(bad("u_values", "must not be empty"));
                }
                for &n in &self.n_values {
                    ModelParams::new(n, 0.0).map_err(|e| bad("n_values", e))?;
                }
            }
            Dos => {
                self.params()?;
                self.delta_initial.ok_or_else(|| missing("delta_initial", self.kind))?;
                if self.energy_bins == 0 {
                    return Err(bad("energy_bins", "must be positive"));
                }
            }
            SpectrumScan => {
                self.params()?;
                self.window()?;
            }
            SweepMap | FinalSplit | IcaCompare => {
                let p = self.params()?;
                if self.half_time.is_none() {
                    return Err(missing("half_time", self.kind));
                }
                self.protocol()?;
                self.check_level(&p)?;
                if self.kind == SweepMap && self.snapshots == 0 {
                    return Err(bad("snapshots", "must be positive"));
                }
                if self.kind != FinalSplit && self.mixture_size != 1 {
                    return Err(bad("mixture_size", format!("kind {} starts from a single eigenstate", self.kind)));
                }
            }
            ReturnScan => {
                let p = self.params()?;
                if self.half_times.is_empty() {
                    return Err(bad("half_times", "must not be empty"));
                }
                self.protocol()?;
                self.check_level(&p)?;
            }
            ClassicalEnsemble => {
                self.params()?;
                if self.half_time.is_none() {
                    return Err(missing("half_time", self.kind));
                }
                self.protocol()?;
                self.classical_energy.ok_or_else(|| missing("classical_energy", self.kind))?;
                match self.samples {
                    None => return Err(missing("samples", self.kind)),
                    Some(0) => return Err(bad("samples", "must be positive")),
                    _ => {}
                }
                if !(self.ensemble_dt > 0.0) {
                    return Err(bad("ensemble_dt", "must be positive"));
                }
            }
            Correspondence => {
                let p = self.params()?;
                if self.half_times.is_empty() {
                    return Err(bad("half_times", "must not be empty"));
                }
                self.protocol()?;
                if self.levels.is_empty() {
                    return Err(bad("levels", "must not be empty"));
                }
                if let Some(&l) = self.levels.iter().find(|&&l| l >= p.dim()) {
                    return Err(bad("levels", format!("{l} exceeds N = {}", p.n_particles())));
                }
                if self.mixture_size > p.dim() {
                    return Err(bad("mixture_size", format!("exceeds N + 1 = {}", p.dim())));
                }
            }
        }
        if let Some(axis) = self.scan_axis {
            if self.scan_values.is_empty() {
                return Err(bad("scan_values", "must not be empty when scan_axis is set"));
            }
            for &v in &self.scan_values {
                self.with_axis(axis, v)?.validate_point()?;
            }
        }
        Ok(())
    }

    /// `validate` without recursing into the scan.
    fn validate_point(&self) -> Result<()> {
        Self { scan_axis: None, scan_values: Vec::new(), ..self.clone() }.validate()
    }

    fn check_level(&self, p: &ModelParams) -> Result<()> {
        let level = self.level.ok_or_else(|| missing("level", self.kind))?;
        if level >= p.dim() {
            return Err(bad("level", format!("{level} exceeds N = {}", p.n_particles())));
        }
        if self.mixture_size > p.dim() {
            return Err(bad("mixture_size", format!("exceeds N + 1 = {}", p.dim())));
        }
        Ok(())
    }

    /// Copy with one scanned parameter replaced.
    pub fn with_axis(&self, axis: ScanAxis, value: f64) -> Result<Self> {
        let count = |field: &str| -> Result<usize> {
            if value >= 0.0 && value.fract() == 0.0 && value < 1e15 {
                Ok(value as usize)
            } else {
                Err(bad(field, format!("scan value {value} is not a non-negative integer")))
            }
        };
        let mut c = self.clone();
        c.scan_axis = None;
        c.scan_values.clear();
        match axis {
            ScanAxis::N => c.n_particles = Some(count("scan_values")?),
            ScanAxis::T => {
                c.half_time = Some(value);
                c.half_times = vec![value];
            }
            ScanAxis::U => c.interaction_u = Some(value),
            ScanAxis::Level => {
                let l = count("scan_values")?;
                c.level = Some(l);
                c.levels = vec![l];
            }
            ScanAxis::Width => c.mixture_size = count("scan_values")?,
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
schema_version = 1
kind = "sweep-map"
n_particles = 30
interaction_u = -3.0
delta_initial = -2.0
delta_turn = 2.0
half_time = 100.0
level = 1
"#;

    #[test]
    fn parses_and_validates() {
        let c = ExperimentConfig::from_toml(BASE).unwrap();
        assert_eq!(c.kind, ExperimentKind::SweepMap);
        assert_eq!(c.grid_points, 401);
        c.validate().unwrap();
        let again = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn missing_field_is_named() {
        let text = BASE.replace("delta_turn = 2.0\n", "");
        let err = ExperimentConfig::from_toml(&text).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("delta_turn"), "{err}");
    }

    #[test]
    fn empty_t_grid_is_rejected() {
        let text = BASE.replace("sweep-map", "return-scan") + "half_times = []\n";
        let err = ExperimentConfig::from_toml(&text).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("half_times"), "{err}");
    }

    #[test]
    fn unknown_keys_and_versions_are_rejected() {
        assert!(ExperimentConfig::from_toml(&(BASE.to_string() + "bogus = 1\n")).is_err());
        let err = ExperimentConfig::from_toml(&BASE.replace("schema_version = 1", "schema_version = 7")).unwrap_err();
        assert!(err.to_string().contains("schema_version"));
    }

    #[test]
    fn scan_overrides() {
        let c = ExperimentConfig::from_toml(BASE).unwrap();
        assert_eq!(c.with_axis(ScanAxis::N, 50.0).unwrap().n_particles, Some(50));
        assert_eq!(c.with_axis(ScanAxis::T, 7.0).unwrap().half_time, Some(7.0));
        assert!(c.with_axis(ScanAxis::Level, 1.5).is_err());
        let mut s = c.clone();
        s.scan_axis = Some(ScanAxis::Level);
        s.scan_values = vec![0.0, 31.0];
        assert!(s.validate().unwrap_err().to_string().contains("level"));
    }
}
