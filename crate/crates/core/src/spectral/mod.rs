//! Adiabatic spectra over a detuning window, minimal gaps, avoided crossings and the
//! density of states.

mod crossings;
mod tunnelling;

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{build_hamiltonian, detuning_slope, ModelParams, SweepProtocol};
use crate::tridiag::{self, SymTridiag};

pub use crossings::{detect_crossings, AvoidedCrossing, DiabaticPair, ReferenceMax};
pub use tunnelling::tunnelling_splitting;

/// Gaps below this multiple of `eps * ||H||` are not resolved in double precision.
pub const GAP_FLOOR_FACTOR: f64 = 1e3;

/// Resolution floor for level separations of `h`.
pub fn gap_floor(t: &SymTridiag) -> f64 {
    GAP_FLOOR_FACTOR * f64::EPSILON * t.norm()
}

/// Adjacent-level separation together with its reliability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Gap {
    pub value: f64,
    /// `false` when the separation is below the double-precision floor.
    pub reliable: bool,
}

/// Eigen-decomposition at a single detuning.
#[derive(Debug, Clone)]
pub struct EigenSolution {
    pub delta: f64,
    pub values: Vec<f64>,
    /// Unit eigenvectors, one per level, when requested.
    pub vectors: Option<Vec<Vec<f64>>>,
    pub gaps: Vec<Gap>,
}

/// Eigenvalues (and optionally eigenvectors) of the Hamiltonian at `delta`.
pub fn eigen_at(params: &ModelParams, delta: f64, want_vectors: bool) -> Result<EigenSolution> {
    let h = build_hamiltonian(params, delta);
    let t = SymTridiag::from_hamiltonian(&h);
    let values = tridiag::eigenvalues(&h.diagonal, &h.off_diagonal).ok_or(Error::NoConvergence {
        delta,
        n: params.n_particles(),
    })?;
    let floor = gap_floor(&t);
    let gaps = values
        .windows(2)
        .map(|w| {
            let value = w[1] - w[0];
            Gap {
                value,
                reliable: value >= floor,
            }
        })
        .collect();
    let vectors = want_vectors.then(|| tridiag::eigenvectors(&t, &values));
    Ok(EigenSolution {
        delta,
        values,
        vectors,
        gaps,
    })
}

/// One refined sample of the separation between levels `i` and `i + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SepSample {
    pub delta: f64,
    pub lower_energy: f64,
    pub gap: f64,
    /// d(gap)/d(delta).
    pub slope: f64,
}

/// Refined separation curve of one adjacent pair.
#[derive(Debug, Clone, Serialize)]
pub struct SeparationTrace {
    pub lower_level: usize,
    /// Samples in ascending detuning.
    pub samples: Vec<SepSample>,
    /// Detuning intervals where the refinement budget ran out.
    pub unresolved: Vec<(f64, f64)>,
}

impl SeparationTrace {
    /// Monotone-in-detuning piecewise-linear interpolation of the discrete samples.
    pub fn interpolate(&self, delta: f64) -> Option<f64> {
        let s = &self.samples;
        if s.is_empty() || delta < s[0].delta || delta > s[s.len() - 1].delta {
            return None;
        }
        let k = s.partition_point(|p| p.delta < delta);
        if k == 0 {
            return Some(s[0].gap);
        }
        let (a, b) = (&s[k - 1], &s[k]);
        let w = b.delta - a.delta;
        if w <= 0.0 {
            return Some(b.gap);
        }
        Some(a.gap + (b.gap - a.gap) * (delta - a.delta) / w)
    }
}

/// Controls for [`scan_spectrum_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    pub base_grid_count: usize,
    /// Highest lower level whose separation is refined; `None` refines every pair.
    pub max_pair: Option<usize>,
    /// Detuning resolution as a fraction of the window width.
    pub relative_resolution: f64,
    /// Refinement evaluations allowed per base cell before flagging "unresolved".
    pub cell_budget: usize,
}

impl ScanOptions {
    pub fn new(base_grid_count: usize) -> Self {
        Self {
            base_grid_count,
            max_pair: None,
            relative_resolution: 1e-9,
            cell_budget: 400,
        }
    }

    pub fn max_pair(mut self, max_pair: usize) -> Self {
        self.max_pair = Some(max_pair);
        self
    }
}

/// Sorted eigenvalue curves over a detuning window plus refined pair separations.
#[derive(Debug, Clone, Serialize)]
pub struct AdiabaticSpectrum {
    pub params: ModelParams,
    pub window: (f64, f64),
    pub delta_grid: Vec<f64>,
    /// `levels[g][n]`: energy of level `n` at `delta_grid[g]`.
    pub levels: Vec<Vec<f64>>,
    /// One trace per refined adjacent pair, indexed by lower level.
    pub traces: Vec<SeparationTrace>,
    /// Largest separation floor met in the window.
    pub gap_floor: f64,
    /// Detuning resolution used by the refinement.
    pub resolution: f64,
}

/// Scan over the sweep window `[delta_initial, delta_turn]` with default options.
pub fn scan_spectrum(
    params: &ModelParams,
    protocol: &SweepProtocol,
    base_grid_count: usize,
) -> Result<AdiabaticSpectrum> {
    scan_window(
        params,
        protocol.delta_initial(),
        protocol.delta_turn(),
        ScanOptions::new(base_grid_count),
    )
}

/// Scan over `[lo, hi]`: full spectra on a uniform base grid, then per-pair refinement
/// of every separation until its extrema are bracketed.
pub fn scan_window(
    params: &ModelParams,
    lo: f64,
    hi: f64,
    options: ScanOptions,
) -> Result<AdiabaticSpectrum> {
    if options.base_grid_count < 3 {
        return Err(crate::error::invalid("base_grid_count", "must be at least 3"));
    }
    if !(hi > lo) {
        return Err(crate::error::invalid("window", format!("empty detuning window [{lo}, {hi}]")));
    }
    let count = options.base_grid_count;
    let delta_grid: Vec<f64> = (0..count)
        .map(|g| lo + (hi - lo) * g as f64 / (count - 1) as f64)
        .collect();
    let fd_step = 1e-6 * (hi - lo).max(1.0);
    let rows: Vec<(Vec<f64>, Vec<f64>, f64)> = delta_grid
        .par_iter()
        .map(|&delta| -> Result<_> {
            let here = eigen_at(params, delta, false)?;
            let ahead = eigen_at(params, delta + fd_step, false)?;
            let slopes = here
                .values
                .iter()
                .zip(&ahead.values)
                .map(|(a, b)| (b - a) / fd_step)
                .collect();
            let h = build_hamiltonian(params, delta);
            let floor = gap_floor(&SymTridiag::from_hamiltonian(&h));
            Ok((here.values, slopes, floor))
        })
        .collect::<Result<_>>()?;
    let floor = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    let n_pairs = params.n_particles();
    let last_pair = options.max_pair.map_or(n_pairs, |m| (m + 1).min(n_pairs));
    let resolution = options.relative_resolution * (hi - lo);
    let traces = (0..last_pair)
        .into_par_iter()
        .map(|i| {
            let base: Vec<SepSample> = delta_grid
                .iter()
                .zip(&rows)
                .map(|(&delta, (vals, slopes, _))| SepSample {
                    delta,
                    lower_energy: vals[i],
                    gap: vals[i + 1] - vals[i],
                    slope: slopes[i + 1] - slopes[i],
                })
                .collect();
            crossings::refine_pair(params, i, base, floor, resolution, options.cell_budget)
        })
        .collect();
    let levels = rows.into_iter().map(|r| r.0).collect();
    Ok(AdiabaticSpectrum {
        params: *params,
        window: (lo, hi),
        delta_grid,
        levels,
        traces,
        gap_floor: floor,
        resolution,
    })
}

/// Smallest adjacent separation found in a spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MinGap {
    pub gap: f64,
    pub lower_level: usize,
    pub delta: f64,
    pub reliable: bool,
}

impl AdiabaticSpectrum {
    pub fn min_gap(&self) -> Option<MinGap> {
        self.traces
            .iter()
            .flat_map(|t| t.samples.iter().map(move |s| (t.lower_level, s)))
            .min_by(|a, b| a.1.gap.total_cmp(&b.1.gap))
            .map(|(lower_level, s)| MinGap {
                gap: s.gap.max(0.0),
                lower_level,
                delta: s.delta,
                reliable: s.gap >= self.gap_floor,
            })
    }

    /// CSV rows `delta,level,energy` for the base grid.
    pub fn write_levels_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "delta,level,energy")?;
        for (delta, row) in self.delta_grid.iter().zip(&self.levels) {
            for (n, e) in row.iter().enumerate() {
                writeln!(out, "{delta:.12e},{n},{e:.15e}")?;
            }
        }
        Ok(())
    }

    /// CSV rows `level,delta,gap,slope` for the refined separation samples.
    pub fn write_separations_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "lower_level,delta,gap,gap_slope")?;
        for t in &self.traces {
            for s in &t.samples {
                writeln!(out, "{},{:.15e},{:.15e},{:.9e}", t.lower_level, s.delta, s.gap, s.slope)?;
            }
        }
        Ok(())
    }
}

/// Global minimum of all adjacent separations over `[lo, hi]`.
pub fn min_gap(params: &ModelParams, lo: f64, hi: f64, base_grid_count: usize) -> Result<MinGap> {
    let spec = scan_window(params, lo, hi, ScanOptions::new(base_grid_count))?;
    spec.min_gap()
        .ok_or_else(|| crate::error::invalid("n_particles", "no adjacent pair for N = 0"))
}

/// Eigenvalue histogram at fixed detuning.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityOfStates {
    pub delta: f64,
    /// `bins + 1` ascending bin edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl DensityOfStates {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Index of the most populated bin (lowest index on ties).
    pub fn peak_bin(&self) -> usize {
        let max = self.counts.iter().copied().max().unwrap_or(0);
        self.counts.iter().position(|&c| c == max).unwrap_or(0)
    }

    pub fn bin_of(&self, energy: f64) -> Option<usize> {
        let n = self.counts.len();
        if energy < self.edges[0] || energy > self.edges[n] {
            return None;
        }
        Some((self.edges.partition_point(|&e| e <= energy)).clamp(1, n) - 1)
    }
}

/// Histogram of the quantum eigenvalues at `delta` over their full range.
pub fn density_of_states(params: &ModelParams, delta: f64, energy_bins: usize) -> Result<DensityOfStates> {
    if energy_bins == 0 {
        return Err(crate::error::invalid("energy_bins", "must be positive"));
    }
    let sol = eigen_at(params, delta, false)?;
    let lo = sol.values[0];
    let hi = *sol.values.last().unwrap();
    let width = if hi > lo { (hi - lo) / energy_bins as f64 } else { 1.0 };
    let edges: Vec<f64> = (0..=energy_bins).map(|k| lo + width * k as f64).collect();
    let mut counts = vec![0; energy_bins];
    for e in &sol.values {
        let k = (((e - lo) / width) as usize).min(energy_bins - 1);
        counts[k] += 1;
    }
    Ok(DensityOfStates {
        delta,
        edges,
        counts,
    })
}

/// Expectation of the population imbalance `(n1 - n2)/2` in a real unit vector;
/// equals dE/d(delta) for an eigenvector.
pub fn imbalance_expectation(params: &ModelParams, v: &[f64]) -> f64 {
    tridiag::diagonal_expectation(v, |i| detuning_slope(params, i))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_level_closed_form() {
        for &delta in &[-1.7, 0.0, 0.4] {
            let p = ModelParams::new(1, -0.6).unwrap();
            let sol = eigen_at(&p, delta, true).unwrap();
            let u = p.interaction();
            let r = (delta * delta + 1.0f64).sqrt() / 2.0;
            assert!((sol.values[0] - (u / 2.0 - r)).abs() < 1e-14);
            assert!((sol.values[1] - (u / 2.0 + r)).abs() < 1e-14);
            assert!(sol.gaps[0].reliable);
        }
        let sol = eigen_at(&ModelParams::new(1, 2.0).unwrap(), 0.0, false).unwrap();
        assert!((sol.gaps[0].value - 1.0).abs() < 1e-14);
    }

    #[test]
    fn near_degenerate_pair_matches_dense_oracle() {
        let p = ModelParams::new(20, -3.0).unwrap();
        let sol = eigen_at(&p, 0.0, true).unwrap();
        let h = build_hamiltonian(&p, 0.0);
        let n = p.dim();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = h.diagonal[i];
            if i + 1 < n {
                m[(i, i + 1)] = h.off_diagonal[i];
                m[(i + 1, i)] = h.off_diagonal[i];
            }
        }
        let mut dense: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        dense.sort_by(|a, b| a.total_cmp(b));
        for k in 0..n {
            assert!((sol.values[k] - dense[k]).abs() < 1e-11);
        }
        assert!(sol.gaps[0].value < 1e-5);
        let vecs = sol.vectors.unwrap();
        let dot: f64 = vecs[0].iter().zip(&vecs[1]).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-8);
    }

    #[test]
    fn histogram_counts_every_level() {
        let p = ModelParams::new(10, -3.0).unwrap();
        let dos = density_of_states(&p, 0.3, 7).unwrap();
        assert_eq!(dos.total(), 11);
        assert_eq!(dos.edges.len(), 8);
    }

    #[test]
    fn interpolation_is_piecewise_linear() {
        let t = SeparationTrace {
            lower_level: 0,
            samples: vec![
                SepSample { delta: 0.0, lower_energy: 0.0, gap: 1.0, slope: 0.0 },
                SepSample { delta: 1.0, lower_energy: 0.0, gap: 3.0, slope: 0.0 },
            ],
            unresolved: vec![],
        };
        assert_eq!(t.interpolate(0.25), Some(1.5));
        assert_eq!(t.interpolate(2.0), None);
    }
}
