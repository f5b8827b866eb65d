use std::f64::consts::PI;

use dimer_hysteresis::model::{ModelParams, SweepProtocol};
use dimer_hysteresis::semiclassics::{
    action_of_energy, evolve_ensemble, initial_side, kruskal_return_probability, sample_microcanonical, EnsembleOptions,
};
use dimer_hysteresis::spectral::eigen_at;

// Fock hopping sqrt((i + 1)(N - i)) equals sqrt(((N + 1)/2)^2 - (p + 1/2)^2), so the
// uniform semiclassical map uses the sphere of radius (N + 1)/2 at the same U. On that
// sphere the single-well levels sit at action 2 pi (k + 1/2).
#[test]
fn levels_obey_bohr_sommerfeld() {
    for n in [100usize, 400] {
        let p = ModelParams::new(n, -3.0).unwrap();
        let uniform = ModelParams::new(n + 1, -3.0 * (n as f64 + 1.0) / n as f64).unwrap();
        let side = initial_side(&p, -2.0);
        for (delta, top, tol) in [(-2.0, 20, 1e-4), (-0.5, 10, 5e-4)] {
            let e = eigen_at(&p, delta, false).unwrap().values;
            for k in 0..=top {
                let a = action_of_energy(e[k] - p.quantum_energy_offset(), delta, &uniform, side).unwrap();
                let quanta = a / (2.0 * PI) - 0.5;
                assert!((quanta - k as f64).abs() < tol, "N = {n}, delta = {delta}, level {k}: {quanta}");
            }
        }
    }
}

#[test]
fn slow_ensemble_approaches_kruskal() {
    let p = ModelParams::new(1000, -3.0).unwrap();
    let proto = SweepProtocol::new(-2.0, 2.0, 800.0).unwrap();
    let ens = sample_microcanonical(-2.6 * p.p0(), -2.0, &p, initial_side(&p, -2.0), 400, 7).unwrap();
    let out = evolve_ensemble(&ens, &p, &proto, &EnsembleOptions::default()).unwrap();
    let k = kruskal_return_probability(ens.action, &p, &proto).unwrap();
    assert_eq!(out.failed, 0);
    // binomial error of 400 samples is about 0.017
    assert!((out.return_probability - k.return_probability).abs() < 0.05, "{} vs {}", out.return_probability, k.return_probability);
    assert!(k.return_probability > 0.0 && k.return_probability < 1.0);
}

#[test]
fn ensemble_action_matches_contour_action() {
    let p = ModelParams::new(1000, -3.0).unwrap();
    let side = initial_side(&p, -2.0);
    let energy = -2.3 * p.p0();
    let ens = sample_microcanonical(energy, -2.0, &p, side, 16, 1).unwrap();
    let a = action_of_energy(energy, -2.0, &p, side).unwrap();
    assert!(((ens.action - a) / a).abs() < 1e-9);
}
