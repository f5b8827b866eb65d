//! Exact propagation of the many-body state through the triangular sweep.
//!
//! On each leg the Hamiltonian is `H(t) = A + delta(t) B` with `delta` linear in time, so
//! the fourth-order Magnus expansion needs a single exponential per step:
//! `psi <- exp(-i [h H(t + h/2) + i (rate h^3 / 12) [A, B]]) psi`.
//! The exponent is tridiagonal with off-diagonals of one common phase, which a diagonal
//! unitary removes; the remaining real symmetric matrix is exponentiated by Chebyshev
//! expansion. Step sizes are controlled by periodic step-doubling probes.

mod analysis;
mod chebyshev;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{build_hamiltonian, detuning_slope, ModelParams, SweepProtocol};

pub use analysis::{
    level_nearest_energy, microcanonical_mixture, project_adiabatic, propagate_mixture,
    return_probability_scan, site_populations, split_final_distribution, AdiabaticOccupation,
    FinalSplit, LevelDistribution, Mixture, MixtureOutcome, ReturnPoint, SitePopulation, ValleySplit,
    ADIABATIC_RETURN_MASS, CLUSTER_MIN_MASS, SEPARATION_THRESHOLD, VALLEY_DEPTH_RATIO,
};

/// Many-body state in the Fock basis at a given time and detuning.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantumState {
    pub amplitudes: Vec<Complex64>,
    pub time: f64,
    pub current_delta: f64,
}

impl QuantumState {
    pub fn from_real(v: &[f64], time: f64, current_delta: f64) -> Self {
        Self {
            amplitudes: v.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            time,
            current_delta,
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Adiabatic eigenstate `level` of `H(delta_initial)` at `t = -T`.
    pub fn eigenstate(params: &ModelParams, protocol: &SweepProtocol, level: usize) -> Result<Self> {
        if level >= params.dim() {
            return Err(crate::error::invalid("level", format!("{level} exceeds N = {}", params.n_particles())));
        }
        let delta = protocol.delta_initial();
        let sol = crate::spectral::eigen_at(params, delta, true)?;
        let v = &sol.vectors.as_ref().unwrap()[level];
        Ok(Self::from_real(v, -protocol.half_time(), delta))
    }
}

/// Integrator controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PropagationOptions {
    /// Target local error per unit time (2-norm of the state error).
    pub tolerance: f64,
    /// Number of equally spaced snapshots over the propagated interval (0 = none).
    pub snapshots: usize,
    /// Stop time; defaults to `T` (full sweep). `0` gives the forward leg only.
    pub end_time: Option<f64>,
    pub max_steps: usize,
    /// Steps between step-doubling error probes.
    pub probe_interval: usize,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            snapshots: 0,
            end_time: None,
            max_steps: 50_000_000,
            probe_interval: 8,
        }
    }
}

impl PropagationOptions {
    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_snapshots(mut self, snapshots: usize) -> Self {
        self.snapshots = snapshots;
        self
    }

    pub fn forward_only(mut self) -> Self {
        self.end_time = Some(0.0);
        self
    }
}

/// Integrator bookkeeping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StepStats {
    pub steps: u64,
    pub probes: u64,
    pub rejected: u64,
    pub matvecs: u64,
    pub norm_drift: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub snapshots: Vec<QuantumState>,
    pub final_state: QuantumState,
    pub stats: StepStats,
}

/// Propagator state shared across steps.
struct Stepper<'a> {
    base_diag: Vec<f64>,
    slopes: Vec<f64>,
    off: Vec<f64>,
    protocol: &'a SweepProtocol,
    kernel: chebyshev::ChebyshevKernel,
    scratch_d: Vec<f64>,
    scratch_e: Vec<f64>,
    phases: Vec<Complex64>,
}

impl<'a> Stepper<'a> {
    fn new(params: &ModelParams, protocol: &'a SweepProtocol) -> Self {
        let h0 = build_hamiltonian(params, 0.0);
        let n = params.dim();
        Self {
            base_diag: h0.diagonal,
            slopes: (0..n).map(|i| detuning_slope(params, i)).collect(),
            off: h0.off_diagonal,
            protocol,
            kernel: chebyshev::ChebyshevKernel::new(n),
            scratch_d: vec![0.0; n],
            scratch_e: vec![0.0; n.saturating_sub(1)],
            phases: vec![Complex64::new(1.0, 0.0); n],
        }
    }

    /// One Magnus step from `t` to `t + h`; `[t, t + h]` must lie within one leg.
    fn step(&mut self, psi: &mut [Complex64], t: f64, h: f64) {
        let mid = t + 0.5 * h;
        let rate = if mid < 0.0 {
            self.protocol.sweep_rate()
        } else {
            -self.protocol.sweep_rate()
        };
        let delta_mid = self.protocol.delta_unchecked(mid);
        let c = rate * h * h * h / 12.0;
        let z = Complex64::new(h, c);
        let rho = z.norm();
        let phi = z.arg();
        for (i, d) in self.scratch_d.iter_mut().enumerate() {
            *d = h * (self.base_diag[i] + delta_mid * self.slopes[i]);
        }
        for (e, k) in self.scratch_e.iter_mut().zip(&self.off) {
            *e = rho * k;
        }
        // generator = P R P^dagger with P = diag(exp(-i k phi))
        let n = psi.len();
        if phi != 0.0 {
            for k in 0..n {
                self.phases[k] = Complex64::from_polar(1.0, k as f64 * phi);
                psi[k] *= self.phases[k];
            }
        }
        self.kernel.apply(&self.scratch_d, &self.scratch_e, psi);
        if phi != 0.0 {
            for k in 0..n {
                psi[k] *= self.phases[k].conj();
            }
        }
    }
}

fn dist(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

/// Propagate `initial` (given at `t = -T`) through the sweep.
pub fn propagate(
    initial: &QuantumState,
    params: &ModelParams,
    protocol: &SweepProtocol,
    options: &PropagationOptions,
) -> Result<Trajectory> {
    let tt = protocol.half_time();
    if initial.amplitudes.len() != params.dim() {
        return Err(crate::error::invalid("initial", "dimension does not match N + 1"));
    }
    if (initial.time + tt).abs() > 1e-12 * tt.max(1.0) {
        return Err(crate::error::invalid("initial", "state must be given at t = -T"));
    }
    let norm0 = initial.norm_sqr();
    if (norm0 - 1.0).abs() > 1e-8 {
        return Err(crate::error::invalid("initial", format!("norm^2 = {norm0}, expected 1")));
    }
    if !(options.tolerance > 0.0) {
        return Err(crate::error::invalid("tolerance", "must be positive"));
    }
    let t_end = options.end_time.unwrap_or(tt);
    if !(t_end > -tt && t_end <= tt) {
        return Err(Error::Domain { what: "end_time", value: t_end, lo: -tt, hi: tt });
    }

    let snap_times: Vec<f64> = match options.snapshots {
        0 => vec![],
        1 => vec![t_end],
        s => (0..s).map(|j| -tt + (t_end + tt) * j as f64 / (s - 1) as f64).collect(),
    };
    let mut stops: Vec<f64> = snap_times.clone();
    if t_end > 0.0 {
        stops.push(0.0);
    }
    stops.push(t_end);
    stops.retain(|&s| s > -tt);
    stops.sort_by(|a, b| a.total_cmp(b));
    stops.dedup();

    let mut stepper = Stepper::new(params, protocol);
    let mut psi = initial.amplitudes.clone();
    let mut t = -tt;
    let mut snapshots = Vec::with_capacity(snap_times.len());
    let mut snap_iter = snap_times.iter().peekable();
    let mut record = |t: f64, psi: &[Complex64], snaps: &mut Vec<QuantumState>| {
        while let Some(&&s) = snap_iter.peek() {
            if (s - t).abs() <= 1e-9 * tt.max(1.0) {
                snaps.push(QuantumState {
                    amplitudes: psi.to_vec(),
                    time: s,
                    current_delta: protocol.delta_unchecked(s),
                });
                snap_iter.next();
            } else {
                break;
            }
        }
    };
    record(t, &psi, &mut snapshots);

    let spread = build_hamiltonian(params, protocol.delta_initial()).gershgorin_norm().max(1.0);
    let mut h = (1.0 / spread.sqrt()).min(0.5 * (t_end + tt));
    let mut stats = StepStats::default();
    let mut since_probe = options.probe_interval;
    let mut full = vec![Complex64::new(0.0, 0.0); psi.len()];
    let mut worst = (f64::NEG_INFINITY, t, t);

    for &stop in &stops {
        while t < stop {
            if stats.steps as usize >= options.max_steps {
                return Err(Error::StepBudget { t_start: worst.1, t_end: worst.2 });
            }
            let mut hh = h.min(stop - t);
            if stop - (t + hh) < 1e-6 * hh {
                hh = stop - t;
            }
            if since_probe >= options.probe_interval {
                // step doubling: one full step against two half steps
                full.copy_from_slice(&psi);
                stepper.step(&mut full, t, hh);
                let mut half = psi.clone();
                stepper.step(&mut half, t, 0.5 * hh);
                stepper.step(&mut half, t + 0.5 * hh, 0.5 * hh);
                stats.probes += 1;
                let err = dist(&full, &half);
                let allowed = options.tolerance * hh;
                let factor = if err > 0.0 {
                    (0.9 * (allowed / err).powf(0.25)).clamp(0.3, 2.0)
                } else {
                    2.0
                };
                if err > allowed {
                    stats.rejected += 1;
                    h = hh * factor;
                    if err / allowed > worst.0 {
                        worst = (err / allowed, t, t + hh);
                    }
                    if h < 1e-12 * tt.max(1.0) {
                        return Err(Error::StepBudget { t_start: t, t_end: t + hh });
                    }
                    continue;
                }
                psi.copy_from_slice(&half);
                since_probe = 0;
                if hh == h.min(stop - t) || factor < 1.0 {
                    h = hh * factor;
                }
            } else {
                stepper.step(&mut psi, t, hh);
                since_probe += 1;
            }
            t = if (stop - (t + hh)).abs() < 1e-12 * tt.max(1.0) { stop } else { t + hh };
            stats.steps += 1;
            record(t, &psi, &mut snapshots);
        }
        t = stop;
    }
    stats.matvecs = stepper.kernel.matvecs;
    let norm = psi.iter().map(|a| a.norm_sqr()).sum::<f64>();
    stats.norm_drift = (norm - norm0).abs();
    let final_state = QuantumState {
        amplitudes: psi,
        time: t_end,
        current_delta: protocol.delta_unchecked(t_end),
    };
    Ok(Trajectory { snapshots, final_state, stats })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_level_landau_zener() {
        // forward leg of a wide two-level sweep
        let p = ModelParams::new(1, 0.0).unwrap();
        let proto = SweepProtocol::new(-200.0, 200.0, 400.0).unwrap();
        let psi = QuantumState::eigenstate(&p, &proto, 0).unwrap();
        let tr = propagate(&psi, &p, &proto, &PropagationOptions::default().forward_only()).unwrap();
        let sol = crate::spectral::eigen_at(&p, 200.0, true).unwrap();
        let v = &sol.vectors.unwrap()[0];
        let stay: f64 = {
            let a: Complex64 = v.iter().zip(&tr.final_state.amplitudes).map(|(x, y)| *x * y).sum();
            a.norm_sqr()
        };
        let rate = proto.sweep_rate();
        let want = (-std::f64::consts::PI / (2.0 * rate)).exp();
        assert!(((1.0 - stay) - want).abs() < 1e-2 * want, "{} vs {}", 1.0 - stay, want);
        assert!(tr.stats.norm_drift < 1e-10);
    }

    /// Midpoint-rule product of dense exponentials, Richardson-extrapolated.
    fn dense_oracle(p: &ModelParams, proto: &SweepProtocol, psi0: &[Complex64], steps: usize) -> Vec<Complex64> {
        use nalgebra::{DMatrix, DVector};
        let run = |m: usize| {
            let n = p.dim();
            let tt = proto.half_time();
            let h = 2.0 * tt / m as f64;
            let mut x = DVector::from_column_slice(psi0);
            for k in 0..m {
                let t = -tt + (k as f64 + 0.5) * h;
                let hm = build_hamiltonian(p, proto.delta_of_t(t).unwrap());
                let mut a = DMatrix::zeros(n, n);
                for i in 0..n {
                    a[(i, i)] = hm.diagonal[i];
                    if i + 1 < n {
                        a[(i, i + 1)] = hm.off_diagonal[i];
                        a[(i + 1, i)] = hm.off_diagonal[i];
                    }
                }
                let eig = a.symmetric_eigen();
                let v = eig.eigenvectors.map(|z| Complex64::new(z, 0.0));
                let ph = DVector::from_iterator(n, eig.eigenvalues.iter().map(|l| Complex64::from_polar(1.0, -l * h)));
                x = &v * ph.component_mul(&(v.adjoint() * &x));
            }
            x
        };
        let coarse = run(steps);
        let fine = run(2 * steps);
        fine.iter().zip(coarse.iter()).map(|(f, c)| f + (f - c) / 3.0).collect()
    }

    #[test]
    fn full_sweep_matches_dense_oracle() {
        for (n, u) in [(4usize, -3.0), (7, -1.5), (10, 0.8)] {
            let p = ModelParams::new(n, u).unwrap();
            let proto = SweepProtocol::new(-2.0, 1.5, 6.0).unwrap();
            let mut psi = QuantumState::eigenstate(&p, &proto, 1).unwrap();
            // add a second component so relative phases matter
            let other = QuantumState::eigenstate(&p, &proto, 2).unwrap();
            for (a, b) in psi.amplitudes.iter_mut().zip(&other.amplitudes) {
                *a = (*a + b * Complex64::new(0.0, 1.0)) / 2f64.sqrt();
            }
            let tr = propagate(&psi, &p, &proto, &PropagationOptions::default()).unwrap();
            let want = dense_oracle(&p, &proto, &psi.amplitudes, 6000);
            let err: f64 = tr.final_state.amplitudes.iter().zip(&want).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            assert!(err < 1e-4, "N={n}: error {err:e}");
            assert!(tr.stats.norm_drift < 1e-8);
            assert_eq!(tr.final_state.time, proto.half_time());
            assert_eq!(tr.final_state.current_delta, proto.delta_initial());
        }
    }

    #[test]
    fn snapshots_are_evenly_spaced_and_normalized() {
        let p = ModelParams::new(30, -3.0).unwrap();
        let proto = SweepProtocol::new(-2.0, 2.0, 20.0).unwrap();
        let psi = QuantumState::eigenstate(&p, &proto, 3).unwrap();
        let tr = propagate(&psi, &p, &proto, &PropagationOptions::default().with_snapshots(5)).unwrap();
        let times: Vec<f64> = tr.snapshots.iter().map(|s| s.time).collect();
        assert_eq!(tr.snapshots.len(), 5);
        for w in times.windows(2) {
            assert!((w[1] - w[0] - 10.0).abs() < 1e-9, "{times:?}");
        }
        for s in &tr.snapshots {
            assert!((s.norm_sqr() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn projection_is_complete() {
        let p = ModelParams::new(25, -3.0).unwrap();
        let proto = SweepProtocol::new(-2.0, 2.0, 5.0).unwrap();
        let psi = QuantumState::eigenstate(&p, &proto, 0).unwrap();
        let tr = propagate(&psi, &p, &proto, &PropagationOptions::default().forward_only()).unwrap();
        let occ = project_adiabatic(&tr.final_state, &p).unwrap();
        assert!((occ.probabilities.total() - 1.0).abs() < 1e-8);
        assert_eq!(occ.delta, 2.0);
    }
}
