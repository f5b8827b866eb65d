//! Mean-field phase space of the dimer: trajectories, fixed points, separatrix lobes,
//! Kruskal's branching ratio and classical ensembles.
//!
//! Coordinates are the phase difference `q` and half the population imbalance `p`,
//! with `|p| <= p0 = N / 2`. Internally most routines work with `z = p / p0` and
//! energies per `p0`, which makes the geometry independent of `N` at fixed `u`.

mod ensemble;
mod geometry;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ModelParams;

pub use ensemble::{
    evolve_ensemble, frozen_energy_drift, sample_microcanonical, two_cluster_split, ClassicalEnsemble, EnsembleOptions,
    EnsembleOutcome, TwoClusters,
};
pub use geometry::{
    action_of_energy, delta_s_for_action, energy_of_action, initial_side, kruskal_return_probability,
    lobe_areas, separatrix_window, write_area_table, KruskalResult, LobeAreas, SeparatrixGeometry, Side,
};

/// Point of the mean-field phase space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassicalState {
    /// Phase difference, wrapped to `[-pi, pi)`.
    pub q: f64,
    /// Half the population imbalance.
    pub p: f64,
}

impl ClassicalState {
    pub fn new(q: f64, p: f64, params: &ModelParams) -> Result<Self> {
        let p0 = params.p0();
        if !(p.abs() <= p0 * (1.0 + 1e-12)) || !q.is_finite() {
            return Err(Error::Domain { what: "p", value: p, lo: -p0, hi: p0 });
        }
        Ok(Self { q: wrap_phase(q), p: p.clamp(-p0, p0) })
    }

    pub(crate) fn from_bloch(s: [f64; 3], p0: f64) -> Self {
        Self {
            q: wrap_phase(s[1].atan2(s[0])),
            p: p0 * s[2].clamp(-1.0, 1.0),
        }
    }

    pub(crate) fn bloch(&self, p0: f64) -> [f64; 3] {
        let z = (self.p / p0).clamp(-1.0, 1.0);
        let r = (1.0 - z * z).max(0.0).sqrt();
        [r * self.q.cos(), r * self.q.sin(), z]
    }
}

pub(crate) fn wrap_phase(q: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let w = (q + std::f64::consts::PI).rem_euclid(tau) - std::f64::consts::PI;
    if w >= std::f64::consts::PI {
        -std::f64::consts::PI
    } else {
        w
    }
}

/// Normalized Hamiltonian: energy per `p0` as a function of `(q, z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Reduced {
    pub omega: f64,
    /// `U p0`
    pub g: f64,
    pub d: f64,
}

impl Reduced {
    pub fn new(params: &ModelParams, delta: f64) -> Self {
        Self {
            omega: params.omega(),
            g: params.interaction() * params.p0(),
            d: delta,
        }
    }

    pub fn energy(&self, q: f64, z: f64) -> f64 {
        let r = (1.0 - z * z).max(0.0).sqrt();
        -self.omega * r * q.cos() + self.g * z * z + self.d * z
    }

    pub fn bloch_energy(&self, s: &[f64; 3]) -> f64 {
        -self.omega * s[0] + self.g * s[2] * s[2] + self.d * s[2]
    }

    /// `dS/dt = grad h x S` on the unit sphere.
    pub fn bloch_rate(&self, s: &[f64; 3]) -> [f64; 3] {
        let c = 2.0 * self.g * s[2] + self.d;
        [-c * s[1], c * s[0] + self.omega * s[2], -self.omega * s[1]]
    }
}

/// Mean-field energy `-Omega sqrt(p0^2 - p^2) cos q + U p^2 + delta p`.
pub fn classical_energy(state: &ClassicalState, delta: f64, params: &ModelParams) -> Result<f64> {
    let p0 = params.p0();
    check_p(state.p, p0)?;
    let r = (p0 * p0 - state.p * state.p).max(0.0).sqrt();
    Ok(-params.omega() * r * state.q.cos() + params.interaction() * state.p * state.p + delta * state.p)
}

/// Hamilton's equations `(dq/dt, dp/dt)` in the `(q, p)` chart. The chart is singular
/// at `|p| = p0`, where a domain error is returned; trajectories are integrated in the
/// regular Bloch-vector chart instead.
pub fn hamilton_eom(state: &ClassicalState, delta: f64, params: &ModelParams) -> Result<(f64, f64)> {
    let p0 = params.p0();
    check_p(state.p, p0)?;
    let r = (p0 * p0 - state.p * state.p).sqrt();
    if r == 0.0 {
        return Err(Error::Domain { what: "p (chart pole)", value: state.p, lo: -p0, hi: p0 });
    }
    let om = params.omega();
    let dq = om * state.p * state.q.cos() / r + 2.0 * params.interaction() * state.p + delta;
    let dp = -om * r * state.q.sin();
    Ok((dq, dp))
}

fn check_p(p: f64, p0: f64) -> Result<()> {
    if p.abs() > p0 * (1.0 + 1e-12) || !p.is_finite() {
        return Err(Error::Domain { what: "p", value: p, lo: -p0, hi: p0 });
    }
    Ok(())
}

/// Kind of stationary point, from the Hessian signature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Minimum,
    Maximum,
    Saddle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedPoint {
    pub state: ClassicalState,
    pub energy: f64,
    pub stability: Stability,
}

/// All stationary points at `delta`, ordered by energy. They lie on `q = 0` or `q = pi`.
pub fn fixed_points(delta: f64, params: &ModelParams) -> Vec<FixedPoint> {
    let red = Reduced::new(params, delta);
    let p0 = params.p0();
    reduced_fixed_points(&red)
        .into_iter()
        .map(|(q, z, stability)| FixedPoint {
            state: ClassicalState { q: wrap_phase(q), p: p0 * z },
            energy: p0 * red.energy(q, z),
            stability,
        })
        .collect()
}

/// `(q, z, kind)` of every stationary point of the reduced Hamiltonian, sorted by energy.
pub(crate) fn reduced_fixed_points(red: &Reduced) -> Vec<(f64, f64, Stability)> {
    let mut out = Vec::new();
    for (q, cq) in [(0.0, 1.0), (std::f64::consts::PI, -1.0)] {
        // with z = sin(t): cos(t) dh/dz = cq Omega sin t + g sin 2t + d cos t
        let f = |t: f64| cq * red.omega * t.sin() + red.g * (2.0 * t).sin() + red.d * t.cos();
        let df = |t: f64| cq * red.omega * t.cos() + 2.0 * red.g * (2.0 * t).cos() - red.d * t.sin();
        for t in monotone_roots(f, df, -std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2) {
            let z = t.sin();
            let r = t.cos();
            if r <= 0.0 {
                continue;
            }
            let hqq = red.omega * r * cq;
            let hpp = red.omega * cq / (r * r * r) + 2.0 * red.g;
            let kind = if hqq * hpp < 0.0 {
                Stability::Saddle
            } else if hqq > 0.0 {
                Stability::Minimum
            } else {
                Stability::Maximum
            };
            out.push((q, z, kind));
        }
    }
    out.sort_by(|a, b| red.energy(a.0, a.1).total_cmp(&red.energy(b.0, b.1)));
    out
}

/// Roots of `f` on `[a, b]`, bracketed between consecutive roots of `df` so that close
/// pairs near a tangency are not lost.
pub(crate) fn monotone_roots(f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64, a: f64, b: f64) -> Vec<f64> {
    const SAMPLES: usize = 4096;
    let mut knots = vec![a];
    let mut prev = df(a);
    for k in 1..=SAMPLES {
        let x = a + (b - a) * k as f64 / SAMPLES as f64;
        let v = df(x);
        if prev * v < 0.0 {
            knots.push(bisect(&df, x - (b - a) / SAMPLES as f64, x));
        }
        prev = v;
    }
    knots.push(b);
    let mut roots = Vec::new();
    for w in knots.windows(2) {
        let (fa, fb) = (f(w[0]), f(w[1]));
        if fa == 0.0 {
            roots.push(w[0]);
        } else if fa * fb < 0.0 {
            roots.push(bisect(&f, w[0], w[1]));
        }
    }
    if f(b) == 0.0 {
        roots.push(b);
    }
    roots.dedup_by(|x, y| (*x - *y).abs() < 1e-14);
    roots
}

/// Bisection to machine precision on a sign-changing bracket.
pub(crate) fn bisect(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Area-preserving display chart: rotation angle about the `y` axis of the Bloch
/// sphere, and minus the `y` component.
///
/// The angle is `atan2(p, r cos q)`, which extends the principal-value arctangent to a
/// bijection. Where `r cos q` vanishes the angle is `sign(p) pi / 2`, with `p = 0`
/// mapped to `+pi / 2`.
pub fn plot_coordinates(state: &ClassicalState, params: &ModelParams) -> (f64, f64) {
    let p0 = params.p0();
    let r = (p0 * p0 - state.p * state.p).max(0.0).sqrt();
    let x = r * state.q.cos();
    let angle = if x.abs() <= 1e-14 * p0 {
        if state.p < 0.0 {
            -std::f64::consts::FRAC_PI_2
        } else {
            std::f64::consts::FRAC_PI_2
        }
    } else {
        state.p.atan2(x)
    };
    (angle, -r * state.q.sin())
}
