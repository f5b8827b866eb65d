//! Microcanonical ensembles and their evolution through the sweep.

use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::geometry::{orbit_component, Side};
use super::{plot_coordinates, wrap_phase, ClassicalState, Reduced};
use crate::error::{invalid, Error, Result};
use crate::model::{ModelParams, SweepProtocol};

/// Step used to locate the orbit and place samples along it.
const ORBIT_STEP: f64 = 2e-3;
/// Orbits slower than this are treated as critical.
const MAX_PERIOD: f64 = 1e5;

fn rk4<F: Fn(f64, &[f64; 3]) -> [f64; 3]>(f: &F, t: f64, s: &[f64; 3], h: f64) -> [f64; 3] {
    let add = |a: &[f64; 3], b: &[f64; 3], c: f64| [a[0] + c * b[0], a[1] + c * b[1], a[2] + c * b[2]];
    let k1 = f(t, s);
    let k2 = f(t + 0.5 * h, &add(s, &k1, 0.5 * h));
    let k3 = f(t + 0.5 * h, &add(s, &k2, 0.5 * h));
    let k4 = f(t + h, &add(s, &k3, h));
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    let n = (out[0] * out[0] + out[1] * out[1] + out[2] * out[2]).sqrt();
    out.map(|x| x / n)
}

/// Equal-energy samples spread uniformly in orbit time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassicalEnsemble {
    pub samples: Vec<ClassicalState>,
    pub energy: f64,
    /// Phase-space area enclosed by the orbit.
    pub action: f64,
    pub delta: f64,
    pub period: f64,
    pub side: Side,
}

impl ClassicalEnsemble {
    /// Samples in `(q, p)` and display coordinates.
    pub fn write_csv<W: Write>(&self, mut out: W, params: &ModelParams) -> Result<()> {
        writeln!(out, "index,q,p,q_plot,p_plot")?;
        for (k, s) in self.samples.iter().enumerate() {
            let (a, b) = plot_coordinates(s, params);
            writeln!(out, "{k},{:.12e},{:.12e},{:.12e},{:.12e}", s.q, s.p, a, b)?;
        }
        Ok(())
    }
}

/// Move `(q, z)` onto the level set `h = e` along the gradient.
fn project(red: &Reduced, mut q: f64, mut z: f64, e: f64) -> (f64, f64) {
    for _ in 0..8 {
        let r = (1.0 - z * z).max(0.0).sqrt();
        if r < 1e-9 {
            break;
        }
        let res = red.energy(q, z) - e;
        if res.abs() <= 1e-15 * e.abs().max(1.0) {
            break;
        }
        let hq = red.omega * r * q.sin();
        let hz = red.omega * z * q.cos() / r + 2.0 * red.g * z + red.d;
        let g2 = hq * hq + hz * hz;
        if g2 == 0.0 {
            break;
        }
        q -= res * hq / g2;
        z = (z - res * hz / g2).clamp(-1.0, 1.0);
    }
    (q, z)
}

/// `count` points on the orbit of energy `energy` around the minimum on `side`, evenly
/// spaced in time from a seeded random phase.
pub fn sample_microcanonical(
    energy: f64,
    delta: f64,
    params: &ModelParams,
    side: Side,
    count: usize,
    seed: u64,
) -> Result<ClassicalEnsemble> {
    if count == 0 {
        return Err(invalid("count", "ensemble must not be empty"));
    }
    let p0 = params.p0();
    let red = Reduced::new(params, delta);
    let e = energy / p0;
    let comp = orbit_component(energy, delta, params, side)?;
    let start = comp.start;
    let rate = |_: f64, s: &[f64; 3]| red.bloch_rate(s);

    // period: successive downward crossings of z = z0
    let z0 = start[2];
    let mut s = start;
    let mut t = 0.0;
    let mut went_up = false;
    let period = loop {
        let next = rk4(&rate, t, &s, ORBIT_STEP);
        if next[2] > z0 && s[2] <= z0 {
            went_up = true;
        }
        if went_up && next[2] < z0 && s[2] >= z0 {
            let f = |h: f64| rk4(&rate, t, &s, h)[2] - z0;
            break t + super::bisect(&f, 0.0, ORBIT_STEP);
        }
        s = next;
        t += ORBIT_STEP;
        if t > MAX_PERIOD {
            return Err(Error::BadContour { energy, reason: "orbit does not close (critical contour)".into() });
        }
    };

    let phase: f64 = ChaCha8Rng::seed_from_u64(seed).gen();
    let spacing = period / count as f64;
    let mut samples = Vec::with_capacity(count);
    let mut s = start;
    let mut t = 0.0;
    for k in 0..count {
        let target = (k as f64 + phase) * spacing;
        while target - t > 1e-15 {
            let h = (target - t).min(ORBIT_STEP);
            s = rk4(&rate, t, &s, h);
            t += h;
        }
        let q = s[1].atan2(s[0]);
        let (q, z) = project(&red, q, s[2], e);
        samples.push(ClassicalState { q: wrap_phase(q), p: p0 * z });
    }
    Ok(ClassicalEnsemble { samples, energy, action: comp.action, delta, period, side })
}

/// Integration controls for ensemble evolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnsembleOptions {
    /// RK4 step in units of `1 / Omega`.
    pub dt: f64,
    /// Centroid separation (energy per `p0`, units of `Omega`) below which the final
    /// energies count as a single returning cluster.
    pub single_cluster_tolerance: f64,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        Self { dt: 5e-3, single_cluster_tolerance: 0.05 }
    }
}

/// Optimal split of a set of numbers into a low and a high group (1-d 2-means).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoClusters {
    pub low_centroid: f64,
    pub high_centroid: f64,
    pub low_count: usize,
    pub high_count: usize,
    /// Midpoint of the two centroids.
    pub threshold: f64,
}

/// Exact 1-d 2-means split by scanning every cut of the sorted values.
pub fn two_cluster_split(values: &[f64]) -> Option<TwoClusters> {
    if values.len() < 2 {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    let mut s1 = vec![0.0; n + 1];
    let mut s2 = vec![0.0; n + 1];
    for i in 0..n {
        s1[i + 1] = s1[i] + v[i];
        s2[i + 1] = s2[i] + v[i] * v[i];
    }
    let sse = |a: usize, b: usize| {
        let m = (b - a) as f64;
        let s = s1[b] - s1[a];
        s2[b] - s2[a] - s * s / m
    };
    let cut = (1..n).min_by(|&a, &b| (sse(0, a) + sse(a, n)).total_cmp(&(sse(0, b) + sse(b, n))))?;
    let low = s1[cut] / cut as f64;
    let high = (s1[n] - s1[cut]) / (n - cut) as f64;
    Some(TwoClusters {
        low_centroid: low,
        high_centroid: high,
        low_count: cut,
        high_count: n - cut,
        threshold: 0.5 * (low + high),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleOutcome {
    pub final_states: Vec<Option<ClassicalState>>,
    pub final_energies: Vec<f64>,
    /// Samples whose integration produced non-finite values.
    pub failed: usize,
    pub clusters: Option<TwoClusters>,
    pub returned: Vec<bool>,
    pub return_probability: f64,
}

/// Integrate every sample through the full sweep and count the returning fraction.
pub fn evolve_ensemble(
    ensemble: &ClassicalEnsemble,
    params: &ModelParams,
    protocol: &SweepProtocol,
    options: &EnsembleOptions,
) -> Result<EnsembleOutcome> {
    if !(options.dt > 0.0) {
        return Err(invalid("dt", "must be positive"));
    }
    if (ensemble.delta - protocol.delta_initial()).abs() > 1e-12 {
        return Err(invalid("ensemble", "must be sampled at the protocol's initial detuning"));
    }
    let p0 = params.p0();
    let tt = protocol.half_time();
    // even number of steps so that the turning point is a step boundary
    let half_steps = (tt / options.dt).ceil().max(1.0) as usize;
    let h = tt / half_steps as f64;
    let rate = |t: f64, s: &[f64; 3]| Reduced::new(params, protocol.delta_unchecked(t)).bloch_rate(s);
    let finals: Vec<Option<[f64; 3]>> = ensemble
        .samples
        .par_iter()
        .map(|st| {
            let mut s = st.bloch(p0);
            for k in 0..2 * half_steps {
                let t = -tt + k as f64 * h;
                s = rk4(&rate, t, &s, h);
            }
            s.iter().all(|x| x.is_finite()).then_some(s)
        })
        .collect();
    let red = Reduced::new(params, protocol.delta_initial());
    let final_states: Vec<Option<ClassicalState>> =
        finals.iter().map(|s| s.map(|s| ClassicalState::from_bloch(s, p0))).collect();
    let final_energies: Vec<f64> = finals.iter().flatten().map(|s| p0 * red.bloch_energy(s)).collect();
    let failed = finals.iter().filter(|s| s.is_none()).count();
    if final_energies.is_empty() {
        return Err(Error::BadContour { energy: ensemble.energy, reason: "every trajectory failed".into() });
    }
    let clusters = two_cluster_split(&final_energies);
    let e0 = ensemble.energy;
    let single = clusters.map_or(true, |c| c.high_centroid - c.low_centroid < options.single_cluster_tolerance * p0 * params.omega());
    let returned: Vec<bool> = match clusters {
        Some(c) if !single => {
            let initial_low = (c.low_centroid - e0).abs() <= (c.high_centroid - e0).abs();
            final_energies.iter().map(|&e| (e < c.threshold) == initial_low).collect()
        }
        _ => vec![true; final_energies.len()],
    };
    let return_probability = returned.iter().filter(|&&r| r).count() as f64 / returned.len() as f64;
    Ok(EnsembleOutcome { final_states, final_energies, failed, clusters, returned, return_probability })
}

/// Energy drift of one trajectory at frozen detuning over `time`, relative to `|E|`.
pub fn frozen_energy_drift(state: &ClassicalState, delta: f64, params: &ModelParams, dt: f64, time: f64) -> f64 {
    let p0 = params.p0();
    let red = Reduced::new(params, delta);
    let rate = |_: f64, s: &[f64; 3]| red.bloch_rate(s);
    let mut s = state.bloch(p0);
    let e0 = red.bloch_energy(&s);
    let steps = (time / dt).ceil() as usize;
    for _ in 0..steps {
        s = rk4(&rate, 0.0, &s, dt);
    }
    ((red.bloch_energy(&s) - e0) / e0.abs().max(f64::MIN_POSITIVE)).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semiclassics::{action_of_energy, classical_energy, kruskal_return_probability};

    fn params() -> ModelParams {
        ModelParams::new(1000, -3.0).unwrap()
    }

    #[test]
    fn split_is_optimal() {
        let v = [1.0, 1.1, 0.9, 5.0, 5.2, 1.05];
        let c = two_cluster_split(&v).unwrap();
        assert_eq!((c.low_count, c.high_count), (4, 2));
        assert!((c.low_centroid - 1.0125).abs() < 1e-12);
        assert!((c.threshold - 0.5 * (1.0125 + 5.1)).abs() < 1e-12);
        assert!(two_cluster_split(&[1.0]).is_none());
    }

    #[test]
    fn samples_lie_on_the_contour() {
        let p = params();
        let side = Side::Above;
        let e = -0.9 * p.p0() * 1.7;
        let ens = sample_microcanonical(e, -2.0, &p, side, 300, 7).unwrap();
        assert_eq!(ens.samples.len(), 300);
        for s in &ens.samples {
            let h = classical_energy(s, -2.0, &p).unwrap();
            assert!(((h - e) / e).abs() < 1e-8);
        }
        let a = action_of_energy(e, -2.0, &p, side).unwrap();
        assert!((a - ens.action).abs() < 1e-12 * a);
        // the same seed reproduces the ensemble
        let again = sample_microcanonical(e, -2.0, &p, side, 300, 7).unwrap();
        assert_eq!(again.samples, ens.samples);
    }

    #[test]
    fn one_period_maps_the_ensemble_to_itself() {
        let p = params();
        let e = -1.55 * p.p0();
        let ens = sample_microcanonical(e, -2.0, &p, Side::Above, 64, 3).unwrap();
        let red = Reduced::new(&p, -2.0);
        let rate = |_: f64, s: &[f64; 3]| red.bloch_rate(s);
        let steps = 20_000;
        let h = ens.period / steps as f64;
        for st in ens.samples.iter().step_by(8) {
            let mut s = st.bloch(p.p0());
            let s0 = s;
            for k in 0..steps {
                s = rk4(&rate, k as f64 * h, &s, h);
            }
            let d: f64 = (0..3).map(|i| (s[i] - s0[i]).powi(2)).sum::<f64>().sqrt();
            assert!(d < 1e-6, "{d}");
        }
    }

    #[test]
    fn frozen_detuning_conserves_energy() {
        let p = params();
        let st = ClassicalState { q: 2.0, p: -0.3 * p.p0() };
        let drift = frozen_energy_drift(&st, 0.4, &p, EnsembleOptions::default().dt, 100.0);
        assert!(drift < 1e-6 * 100.0, "{drift}");
    }

    #[test]
    fn reversible_when_separatrix_is_not_reached() {
        let p = params();
        let e = -1.6 * p.p0();
        let ens = sample_microcanonical(e, -2.0, &p, Side::Above, 40, 1).unwrap();
        // this orbit meets the separatrix near -0.46, so turn before it
        let proto = SweepProtocol::new(-2.0, -0.8, 200.0).unwrap();
        let out = evolve_ensemble(&ens, &p, &proto, &EnsembleOptions::default()).unwrap();
        assert_eq!(out.return_probability, 1.0);
        assert_eq!(out.failed, 0);
        let k = kruskal_return_probability(ens.action, &p, &proto).unwrap();
        assert_eq!(k.return_probability, 1.0);
    }
}
