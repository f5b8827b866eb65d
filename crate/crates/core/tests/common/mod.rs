//! Dense-matrix oracles shared by the integration tests.

use dimer_hysteresis::model::{build_hamiltonian, ModelParams, SweepProtocol};
use dimer_hysteresis::propagation::QuantumState;
use nalgebra::DMatrix;
use num_complex::Complex64;

pub fn dense(params: &ModelParams, delta: f64) -> DMatrix<f64> {
    let h = build_hamiltonian(params, delta);
    let n = h.dim();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = h.diagonal[i];
    }
    for i in 0..n - 1 {
        m[(i, i + 1)] = h.off_diagonal[i];
        m[(i + 1, i)] = h.off_diagonal[i];
    }
    m
}

/// exp(-i H h) psi through a dense eigendecomposition.
pub fn dense_step(h: &DMatrix<f64>, dt: f64, psi: &[Complex64]) -> Vec<Complex64> {
    let eig = h.clone().symmetric_eigen();
    let v = &eig.eigenvectors;
    let n = psi.len();
    let mut coef = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..n {
        let c: Complex64 = (0..n).map(|i| v[(i, k)] * psi[i]).sum();
        coef[k] = c * Complex64::from_polar(1.0, -eig.eigenvalues[k] * dt);
    }
    (0..n).map(|i| (0..n).map(|k| v[(i, k)] * coef[k]).sum()).collect()
}

/// Exponential midpoint rule with a dense exponential per step; second order, so
/// `steps` in the thousands puts its own error far below 1e-4 for short sweeps.
#[allow(dead_code)]
pub fn dense_sweep(start: &QuantumState, params: &ModelParams, protocol: &SweepProtocol, steps: usize) -> Vec<Complex64> {
    let tt = protocol.half_time();
    let dt = 2.0 * tt / steps as f64;
    let mut psi = start.amplitudes.clone();
    for k in 0..steps {
        let mid = -tt + (k as f64 + 0.5) * dt;
        psi = dense_step(&dense(params, protocol.delta_of_t(mid).unwrap()), dt, &psi);
    }
    psi
}

#[allow(dead_code)]
pub fn distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}
