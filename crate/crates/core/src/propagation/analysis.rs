//! Adiabatic projections, final-distribution splitting and microcanonical mixtures.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::{propagate, PropagationOptions, QuantumState, StepStats};
use crate::error::{invalid, Result};
use crate::model::{ModelParams, SweepProtocol};
use crate::spectral::eigen_at;

/// Per-level probability threshold for the empty run separating two final clusters.
pub const SEPARATION_THRESHOLD: f64 = 1e-6;
/// Minimal mass of each cluster on either side of a separating run.
pub const CLUSTER_MIN_MASS: f64 = 0.01;
/// Final mass on the initial support above which the return counts as complete.
pub const ADIABATIC_RETURN_MASS: f64 = 1.0 - 1e-3;
/// Largest valley occupation, relative to the lower of the two peaks, accepted by the
/// valley rule. Cascade distributions at moderate sweep times have valleys only a few
/// times below the escaped peak; on the flank of a single peak the ratio stays near 1.
pub const VALLEY_DEPTH_RATIO: f64 = 0.25;

/// Probability vector over adiabatic levels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelDistribution(pub Vec<f64>);

impl LevelDistribution {
    pub fn indicator(dim: usize, level: usize) -> Self {
        let mut p = vec![0.0; dim];
        p[level] = 1.0;
        Self(p)
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn l1_distance(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).sum()
    }

    /// Mean energy for the given level energies.
    pub fn mean_energy(&self, energies: &[f64]) -> f64 {
        self.0.iter().zip(energies).map(|(p, e)| p * e).sum::<f64>() / self.total()
    }
}

/// Occupation of the instantaneous eigenstates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdiabaticOccupation {
    pub probabilities: LevelDistribution,
    /// Level energies at `delta`.
    pub energies: Vec<f64>,
    pub delta: f64,
    pub time: f64,
}

/// Outcome of splitting a final distribution into a returning and an escaped group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalSplit {
    pub low_peak_mass: f64,
    pub high_peak_mass: f64,
    /// Mass inside the separating run.
    pub residual: f64,
    /// Levels (inclusive) of the separating run.
    pub gap_levels: Option<(usize, usize)>,
    /// Energy interval spanned by the separating run.
    pub gap_range: Option<(f64, f64)>,
    pub separable: bool,
    /// Mass of the cluster containing the initial energy (only when separable).
    pub return_probability: Option<f64>,
    /// Level closest to the initial mean energy.
    pub reference_level: usize,
    /// Final occupation of the reference level.
    pub mass_at_reference: f64,
    /// Final mass on the levels occupied initially.
    pub initial_support_mass: f64,
    /// Fallback split at the deepest minimum, for distributions with slowly decaying
    /// tails (the incoherent cascade) that never fall below the separation threshold.
    pub valley: Option<ValleySplit>,
}

impl FinalSplit {
    /// Return probability from the gap rule, else from the valley rule.
    pub fn peak_return_probability(&self) -> Option<f64> {
        self.return_probability.or(self.valley.map(|v| v.return_probability))
    }
}

/// Split at a single level of minimal occupation between two peaks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValleySplit {
    pub level: usize,
    /// Occupation of the valley level over the lower of the two peak occupations.
    pub depth: f64,
    /// Mass strictly on the side of the valley holding the reference level.
    pub return_probability: f64,
}

/// Deepest interior minimum with at least [`CLUSTER_MIN_MASS`] on each side and a
/// depth ratio of at most [`VALLEY_DEPTH_RATIO`]; `None` if the reference level is the
/// valley itself.
fn valley_split(p: &[f64], prefix: &[f64], reference: usize) -> Option<ValleySplit> {
    let n = p.len();
    let total = prefix[n];
    let v = (1..n.saturating_sub(1))
        .filter(|&k| prefix[k] >= CLUSTER_MIN_MASS && total - prefix[k + 1] >= CLUSTER_MIN_MASS)
        .min_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)))?;
    let peak_below = p[..v].iter().cloned().fold(0.0, f64::max);
    let peak_above = p[v + 1..].iter().cloned().fold(0.0, f64::max);
    let depth = p[v] / peak_below.min(peak_above);
    if !(depth <= VALLEY_DEPTH_RATIO) || reference == v {
        return None;
    }
    let return_probability = if reference < v { prefix[v] } else { total - prefix[v + 1] };
    Some(ValleySplit { level: v, depth, return_probability })
}

/// Level whose energy is closest to `energy`.
pub fn level_nearest_energy(energies: &[f64], energy: f64) -> usize {
    energies
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - energy).abs().total_cmp(&(b.1 - energy).abs()))
        .map(|p| p.0)
        .unwrap_or(0)
}

/// Split a final occupation at `delta_initial` against the initial distribution.
///
/// The widest run of levels each holding less than [`SEPARATION_THRESHOLD`] that
/// separates two clusters of at least [`CLUSTER_MIN_MASS`] defines the split. Without
/// such a run the distribution counts as separable only if it stayed on the initial
/// levels (complete return).
pub fn split_final_distribution(occ: &AdiabaticOccupation, initial: &LevelDistribution) -> FinalSplit {
    let p = &occ.probabilities.0;
    let n = p.len();
    let e0 = initial.mean_energy(&occ.energies);
    let reference_level = level_nearest_energy(&occ.energies, e0);
    let support_mass: f64 = initial
        .0
        .iter()
        .zip(p)
        .filter(|(q, _)| **q > 0.0)
        .map(|(_, x)| x)
        .sum();
    let total: f64 = p.iter().sum();

    let mut prefix = vec![0.0; n + 1];
    for k in 0..n {
        prefix[k + 1] = prefix[k] + p[k];
    }
    let mut best: Option<(usize, usize)> = None;
    let mut k = 0;
    while k < n {
        if p[k] < SEPARATION_THRESHOLD {
            let s = k;
            while k + 1 < n && p[k + 1] < SEPARATION_THRESHOLD {
                k += 1;
            }
            let e = k;
            let below = prefix[s];
            let above = prefix[n] - prefix[e + 1];
            if s > 0 && e + 1 < n && below >= CLUSTER_MIN_MASS && above >= CLUSTER_MIN_MASS {
                let wider = best.map_or(true, |(bs, be)| e - s > be - bs);
                if wider {
                    best = Some((s, e));
                }
            }
        }
        k += 1;
    }

    let base = FinalSplit {
        low_peak_mass: total,
        high_peak_mass: 0.0,
        residual: 0.0,
        gap_levels: None,
        gap_range: None,
        separable: false,
        return_probability: None,
        reference_level,
        mass_at_reference: p[reference_level],
        initial_support_mass: support_mass,
        valley: valley_split(p, &prefix, reference_level),
    };
    match best {
        Some((s, e)) => {
            let low = prefix[s];
            let high = prefix[n] - prefix[e + 1];
            let residual = prefix[e + 1] - prefix[s];
            let ret = if reference_level < s {
                Some(low)
            } else if reference_level > e {
                Some(high)
            } else {
                None
            };
            FinalSplit {
                low_peak_mass: low,
                high_peak_mass: high,
                residual,
                gap_levels: Some((s, e)),
                gap_range: Some((occ.energies[s], occ.energies[e])),
                separable: ret.is_some(),
                return_probability: ret,
                ..base
            }
        }
        None if support_mass >= ADIABATIC_RETURN_MASS => FinalSplit {
            separable: true,
            return_probability: Some(total),
            ..base
        },
        None => base,
    }
}

/// Occupations of the eigenstates of `H(state.current_delta)`.
pub fn project_adiabatic(state: &QuantumState, params: &ModelParams) -> Result<AdiabaticOccupation> {
    let sol = eigen_at(params, state.current_delta, true)?;
    let vectors = sol.vectors.as_ref().unwrap();
    Ok(AdiabaticOccupation {
        probabilities: LevelDistribution(overlaps(vectors, &state.amplitudes)),
        energies: sol.values,
        delta: state.current_delta,
        time: state.time,
    })
}

fn overlaps(vectors: &[Vec<f64>], psi: &[Complex64]) -> Vec<f64> {
    vectors
        .iter()
        .map(|v| {
            let a: Complex64 = v.iter().zip(psi).map(|(x, y)| y * *x).sum();
            a.norm_sqr()
        })
        .collect()
}

/// Equal-weight mixture of adjacent eigenstates of `H(delta)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mixture {
    pub delta: f64,
    pub levels: Vec<usize>,
    pub weights: Vec<f64>,
    pub mean_energy: f64,
}

impl Mixture {
    pub fn single(params: &ModelParams, delta: f64, level: usize) -> Result<Self> {
        let sol = eigen_at(params, delta, false)?;
        if level >= sol.values.len() {
            return Err(invalid("level", format!("{level} exceeds N = {}", params.n_particles())));
        }
        Ok(Self {
            delta,
            levels: vec![level],
            weights: vec![1.0],
            mean_energy: sol.values[level],
        })
    }

    /// `k` consecutive levels centred on `level`, shifted inward at the ladder ends.
    pub fn centred(params: &ModelParams, delta: f64, level: usize, k: usize) -> Result<Self> {
        let dim = params.dim();
        if k == 0 || k > dim {
            return Err(invalid("k", format!("mixture size {k} not in 1..={dim}")));
        }
        let start = level.saturating_sub((k - 1) / 2).min(dim - k);
        let sol = eigen_at(params, delta, false)?;
        let levels: Vec<usize> = (start..start + k).collect();
        let mean_energy = levels.iter().map(|&l| sol.values[l]).sum::<f64>() / k as f64;
        Ok(Self {
            delta,
            levels,
            weights: vec![1.0 / k as f64; k],
            mean_energy,
        })
    }

    pub fn distribution(&self, dim: usize) -> LevelDistribution {
        let mut p = vec![0.0; dim];
        for (&l, &w) in self.levels.iter().zip(&self.weights) {
            p[l] += w;
        }
        LevelDistribution(p)
    }
}

/// The `k` eigenstates of `H(delta_initial)` nearest `target_energy`, equally weighted,
/// with the window placed so the mixture mean is as close to the target as possible.
pub fn microcanonical_mixture(
    params: &ModelParams,
    delta_initial: f64,
    target_energy: f64,
    k: usize,
) -> Result<Mixture> {
    let sol = eigen_at(params, delta_initial, false)?;
    let e = &sol.values;
    if k == 0 || k > e.len() {
        return Err(invalid("k", format!("mixture size {k} not in 1..={}", e.len())));
    }
    let mut window: f64 = e[..k].iter().sum();
    let mut best = (0usize, (window / k as f64 - target_energy).abs());
    for s in 1..=e.len() - k {
        window += e[s + k - 1] - e[s - 1];
        let miss = (window / k as f64 - target_energy).abs();
        if miss < best.1 {
            best = (s, miss);
        }
    }
    let levels: Vec<usize> = (best.0..best.0 + k).collect();
    let mean_energy = levels.iter().map(|&l| e[l]).sum::<f64>() / k as f64;
    Ok(Mixture {
        delta: delta_initial,
        levels,
        weights: vec![1.0 / k as f64; k],
        mean_energy,
    })
}

/// Final occupation of an incoherent mixture after the sweep.
#[derive(Debug, Clone, Serialize)]
pub struct MixtureOutcome {
    pub occupation: AdiabaticOccupation,
    pub stats: Vec<StepStats>,
}

/// Propagate each member of `mixture` and combine the final occupations.
pub fn propagate_mixture(
    mixture: &Mixture,
    params: &ModelParams,
    protocol: &SweepProtocol,
    options: &PropagationOptions,
) -> Result<MixtureOutcome> {
    if (mixture.delta - protocol.delta_initial()).abs() > 1e-12 {
        return Err(invalid("mixture", "must be built at the protocol's initial detuning"));
    }
    let start = eigen_at(params, protocol.delta_initial(), true)?;
    let start_vecs = start.vectors.as_ref().unwrap();
    let t_end = options.end_time.unwrap_or(protocol.half_time());
    let delta_end = protocol.delta_of_t(t_end)?;
    let end = if delta_end == protocol.delta_initial() {
        start.clone()
    } else {
        eigen_at(params, delta_end, true)?
    };
    let end_vecs = end.vectors.as_ref().unwrap();
    let results: Vec<(Vec<f64>, StepStats)> = mixture
        .levels
        .par_iter()
        .map(|&l| -> Result<_> {
            let psi = QuantumState::from_real(&start_vecs[l], -protocol.half_time(), protocol.delta_initial());
            let tr = propagate(&psi, params, protocol, options)?;
            Ok((overlaps(end_vecs, &tr.final_state.amplitudes), tr.stats))
        })
        .collect::<Result<_>>()?;
    let mut p = vec![0.0; params.dim()];
    for ((q, _), w) in results.iter().zip(&mixture.weights) {
        p.iter_mut().zip(q).for_each(|(a, b)| *a += w * b);
    }
    Ok(MixtureOutcome {
        occupation: AdiabaticOccupation {
            probabilities: LevelDistribution(p),
            energies: end.values,
            delta: delta_end,
            time: t_end,
        },
        stats: results.into_iter().map(|r| r.1).collect(),
    })
}

/// Exact return probability of one mixture at one sweep time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReturnPoint {
    pub half_time: f64,
    pub split: FinalSplit,
    pub final_distribution: LevelDistribution,
    pub max_norm_drift: f64,
}

/// Exact-propagation return probabilities over a list of half times.
pub fn return_probability_scan(
    mixture: &Mixture,
    params: &ModelParams,
    protocol: &SweepProtocol,
    half_times: &[f64],
    options: &PropagationOptions,
) -> Result<Vec<ReturnPoint>> {
    if half_times.is_empty() {
        return Err(invalid("half_times", "empty list"));
    }
    let initial = mixture.distribution(params.dim());
    half_times
        .par_iter()
        .map(|&tt| {
            let proto = protocol.with_half_time(tt)?;
            let out = propagate_mixture(mixture, params, &proto, options)?;
            let split = split_final_distribution(&out.occupation, &initial);
            Ok(ReturnPoint {
                half_time: tt,
                split,
                final_distribution: out.occupation.probabilities,
                max_norm_drift: out.stats.iter().map(|s| s.norm_drift).fold(0.0, f64::max),
            })
        })
        .collect()
}

/// Site occupations of one eigenstate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SitePopulation {
    pub level: usize,
    pub energy: f64,
    pub n1: f64,
    pub n2: f64,
}

/// Expected site occupations of every eigenstate of `H(delta)`.
pub fn site_populations(params: &ModelParams, delta: f64) -> Result<Vec<SitePopulation>> {
    let sol = eigen_at(params, delta, true)?;
    let n = params.n_particles() as f64;
    Ok(sol
        .vectors
        .as_ref()
        .unwrap()
        .iter()
        .enumerate()
        .map(|(level, v)| {
            let n1: f64 = v.iter().enumerate().map(|(i, x)| x * x * i as f64).sum();
            SitePopulation {
                level,
                energy: sol.values[level],
                n1,
                n2: n - n1,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn occ(p: Vec<f64>) -> AdiabaticOccupation {
        let energies = (0..p.len()).map(|k| k as f64).collect();
        AdiabaticOccupation {
            probabilities: LevelDistribution(p),
            energies,
            delta: 0.0,
            time: 0.0,
        }
    }

    #[test]
    fn indicator_returns_completely() {
        let o = occ(vec![0.0, 0.0, 1.0, 0.0]);
        let s = split_final_distribution(&o, &LevelDistribution::indicator(4, 2));
        assert!(s.separable);
        assert_eq!(s.return_probability, Some(1.0));
    }

    #[test]
    fn bimodal_split_picks_widest_run() {
        let mut p = vec![0.0; 12];
        p[1] = 0.3;
        p[2] = 0.1;
        p[3] = 1e-7;
        p[4] = 2e-6; // breaks the first run
        p[5] = 1e-8;
        p[6] = 1e-8;
        p[7] = 1e-9;
        p[8] = 0.4;
        p[9] = 0.2 - 2.12e-6;
        let s = split_final_distribution(&occ(p), &LevelDistribution::indicator(12, 2));
        assert!(s.separable);
        assert_eq!(s.gap_levels, Some((5, 7)));
        assert!((s.return_probability.unwrap() - (0.4 + 1e-7 + 2e-6)).abs() < 1e-12);
    }

    #[test]
    fn spread_distribution_is_not_separable() {
        let p = vec![0.1; 10];
        let s = split_final_distribution(&occ(p), &LevelDistribution::indicator(10, 1));
        assert!(!s.separable);
        assert_eq!(s.return_probability, None);
        assert!((s.mass_at_reference - 0.1).abs() < 1e-15);
    }

    #[test]
    fn valley_rule_splits_slow_tails() {
        // two peaks joined by a floor of 1e-5: no run below the threshold
        let mut p = vec![1e-5; 20];
        p[3] = 0.5;
        p[4] = 0.1;
        p[14] = 0.3;
        p[15] = 0.05;
        p[10] = 4e-6;
        let total: f64 = p.iter().sum();
        let p: Vec<f64> = p.iter().map(|x| x / total).collect();
        let s = split_final_distribution(&occ(p.clone()), &LevelDistribution::indicator(20, 3));
        assert!(!s.separable);
        let v = s.valley.unwrap();
        assert_eq!(v.level, 10);
        assert!((v.return_probability - p[..10].iter().sum::<f64>()).abs() < 1e-15);
        assert_eq!(s.peak_return_probability(), Some(v.return_probability));
        // a single broad peak has no valley
        let s = split_final_distribution(&occ(vec![0.1; 10]), &LevelDistribution::indicator(10, 1));
        assert_eq!(s.valley, None);
        let bell: Vec<f64> = (0..30).map(|k| (-((k as f64 - 12.0) / 4.0).powi(2)).exp()).collect();
        let total: f64 = bell.iter().sum();
        let s = split_final_distribution(&occ(bell.iter().map(|x| x / total).collect()), &LevelDistribution::indicator(30, 12));
        assert_eq!(s.valley, None);
    }

    #[test]
    fn mixture_selection() {
        let p = ModelParams::new(40, -3.0).unwrap();
        let sol = eigen_at(&p, -2.0, false).unwrap();
        let m = microcanonical_mixture(&p, -2.0, sol.values[7], 1).unwrap();
        assert_eq!(m.levels, vec![7]);
        let target = 0.25 * (sol.values[5] + sol.values[6] + sol.values[7] + sol.values[8]);
        let m = microcanonical_mixture(&p, -2.0, target, 4).unwrap();
        assert_eq!(m.levels, vec![5, 6, 7, 8]);
        assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(microcanonical_mixture(&p, -2.0, 0.0, 42).is_err());
    }
}
