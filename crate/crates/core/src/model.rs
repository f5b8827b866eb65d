//! Model parameters, the sweep protocol and the fixed-N Hamiltonian in the Fock basis.
//!
//! Energies and detunings are in units of the tunnelling rate, times in its inverse.
//! The Fock index `i` is the occupation of site 1, so `n2 = N - i`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Particle number, tunnelling rate and mean-field interaction `u = U N / omega`.
///
/// `u` is the stored quantity; the per-particle interaction `U` is derived from it so
/// that scans over `N` at fixed `u` stay exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    n_particles: usize,
    omega: f64,
    interaction_u: f64,
}

impl ModelParams {
    pub fn new(n_particles: usize, interaction_u: f64) -> Result<Self> {
        Self::with_omega(n_particles, 1.0, interaction_u)
    }

    pub fn with_omega(n_particles: usize, omega: f64, interaction_u: f64) -> Result<Self> {
        if n_particles == 0 {
            return Err(invalid("n_particles", "must be at least 1"));
        }
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(invalid("omega", format!("must be positive and finite, got {omega}")));
        }
        if !interaction_u.is_finite() {
            return Err(invalid("interaction_u", "must be finite"));
        }
        Ok(Self {
            n_particles,
            omega,
            interaction_u,
        })
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    /// Hilbert-space dimension `N + 1`.
    pub fn dim(&self) -> usize {
        self.n_particles + 1
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn interaction_u(&self) -> f64 {
        self.interaction_u
    }

    /// Per-particle interaction `U = u omega / N`.
    pub fn interaction(&self) -> f64 {
        self.interaction_u * self.omega / self.n_particles as f64
    }

    /// Half the particle number, the radius of the classical phase space.
    pub fn p0(&self) -> f64 {
        self.n_particles as f64 / 2.0
    }

    /// Constant `U N^2 / 4` separating quantum eigenvalues from classical energies:
    /// `E_quantum = H_classical + offset` (up to O(1) ordering corrections).
    pub fn quantum_energy_offset(&self) -> f64 {
        let n = self.n_particles as f64;
        self.interaction() * n * n / 4.0
    }

    pub fn with_n(&self, n_particles: usize) -> Result<Self> {
        Self::with_omega(n_particles, self.omega, self.interaction_u)
    }
}

/// Triangular detuning sweep from `delta_initial` to `delta_turn` (at `t = 0`) and back.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepProtocol {
    delta_initial: f64,
    delta_turn: f64,
    half_time: f64,
}

/// Which half of the triangular sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Leg {
    Forward,
    Backward,
}

impl SweepProtocol {
    pub fn new(delta_initial: f64, delta_turn: f64, half_time: f64) -> Result<Self> {
        if !(delta_initial.is_finite() && delta_turn.is_finite()) {
            return Err(invalid("delta", "sweep endpoints must be finite"));
        }
        if delta_turn <= delta_initial {
            return Err(invalid(
                "delta_turn",
                format!("must exceed delta_initial ({delta_turn} <= {delta_initial})"),
            ));
        }
        if !(half_time > 0.0 && half_time.is_finite()) {
            return Err(invalid("half_time", format!("must be positive, got {half_time}")));
        }
        Ok(Self {
            delta_initial,
            delta_turn,
            half_time,
        })
    }

    pub fn delta_initial(&self) -> f64 {
        self.delta_initial
    }

    pub fn delta_turn(&self) -> f64 {
        self.delta_turn
    }

    pub fn half_time(&self) -> f64 {
        self.half_time
    }

    /// Magnitude of the detuning rate on either leg.
    pub fn sweep_rate(&self) -> f64 {
        (self.delta_turn - self.delta_initial) / self.half_time
    }

    pub fn with_half_time(&self, half_time: f64) -> Result<Self> {
        Self::new(self.delta_initial, self.delta_turn, half_time)
    }

    /// Detuning at time `t` in `[-T, T]`.
    pub fn delta_of_t(&self, t: f64) -> Result<f64> {
        let tt = self.half_time;
        if !(t >= -tt && t <= tt) {
            return Err(Error::Domain {
                what: "t",
                value: t,
                lo: -tt,
                hi: tt,
            });
        }
        Ok(self.delta_unchecked(t))
    }

    pub(crate) fn delta_unchecked(&self, t: f64) -> f64 {
        let s = (t.abs() / self.half_time).min(1.0);
        self.delta_initial * s + self.delta_turn * (1.0 - s)
    }

    /// Signed d(delta)/dt on a leg.
    pub fn leg_rate(&self, leg: Leg) -> f64 {
        match leg {
            Leg::Forward => self.sweep_rate(),
            Leg::Backward => -self.sweep_rate(),
        }
    }
}

/// Real symmetric tridiagonal matrix; `off_diagonal[i]` couples `i` and `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalHamiltonian {
    pub diagonal: Vec<f64>,
    pub off_diagonal: Vec<f64>,
}

impl TridiagonalHamiltonian {
    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    /// `y = H x` for real or complex vectors.
    pub fn apply<T>(&self, x: &[T], y: &mut [T])
    where
        T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
    {
        let n = self.diagonal.len();
        let d = &self.diagonal;
        let e = &self.off_diagonal;
        if n == 1 {
            y[0] = x[0] * d[0];
            return;
        }
        y[0] = x[0] * d[0] + x[1] * e[0];
        for i in 1..n - 1 {
            y[i] = x[i - 1] * e[i - 1] + x[i] * d[i] + x[i + 1] * e[i];
        }
        y[n - 1] = x[n - 2] * e[n - 2] + x[n - 1] * d[n - 1];
    }

    /// Gershgorin bound on the spectral radius.
    pub fn gershgorin_norm(&self) -> f64 {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let l = if i > 0 { self.off_diagonal[i - 1].abs() } else { 0.0 };
                let r = if i + 1 < n { self.off_diagonal[i].abs() } else { 0.0 };
                self.diagonal[i].abs() + l + r
            })
            .fold(0.0, f64::max)
    }
}

/// Interaction energy of Fock state `i`: `U (N^2/2 + i^2 - N i)`.
pub fn interaction_energy(params: &ModelParams, i: usize) -> f64 {
    let n = params.n_particles as f64;
    let i = i as f64;
    params.interaction() * (n * n / 2.0 + i * i - n * i)
}

/// Detuning slope of Fock state `i`: `(2i - N)/2`, i.e. the population imbalance.
pub fn detuning_slope(params: &ModelParams, i: usize) -> f64 {
    i as f64 - params.n_particles as f64 / 2.0
}

/// Magnitude of the tunnelling element between Fock states `i` and `i + 1`.
pub fn tunnelling_element(params: &ModelParams, i: usize) -> f64 {
    let n = params.n_particles as f64;
    let i = i as f64;
    0.5 * params.omega * ((i + 1.0) * (n - i)).sqrt()
}

/// Hamiltonian at detuning `delta` with the negative tunnelling sign of the
/// second-quantized form (the diabatic listing uses positive couplings; spectra agree).
pub fn build_hamiltonian(params: &ModelParams, delta: f64) -> TridiagonalHamiltonian {
    let dim = params.dim();
    let diagonal = (0..dim)
        .map(|i| interaction_energy(params, i) + delta * detuning_slope(params, i))
        .collect();
    let off_diagonal = (0..dim - 1)
        .map(|i| -tunnelling_element(params, i))
        .collect();
    TridiagonalHamiltonian {
        diagonal,
        off_diagonal,
    }
}

/// Mean-field equations for the two mode amplitudes, returning `d alpha / dt`.
pub fn mean_field_amplitude_eom(
    alpha: [Complex64; 2],
    delta: f64,
    params: &ModelParams,
) -> [Complex64; 2] {
    let u = params.interaction();
    let half_omega = 0.5 * params.omega;
    let minus_i = Complex64::new(0.0, -1.0);
    let [a1, a2] = alpha;
    let r1 = -half_omega * a2 + (u * a1.norm_sqr() + 0.5 * delta) * a1;
    let r2 = -half_omega * a1 + (u * a2.norm_sqr() - 0.5 * delta) * a2;
    [minus_i * r1, minus_i * r2]
}
