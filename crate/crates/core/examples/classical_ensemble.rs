//! A microcanonical ensemble on one orbit, driven through the sweep; the returning
//! fraction against Kruskal's quasi-static value.
//!
//! cargo run --release --example classical_ensemble

use dimer_hysteresis::semiclassics::{
    evolve_ensemble, initial_side, kruskal_return_probability, sample_microcanonical, EnsembleOptions,
};
use dimer_hysteresis::{ModelParams, SweepProtocol};

fn main() -> dimer_hysteresis::Result<()> {
    let params = ModelParams::new(1000, -3.0)?;
    let side = initial_side(&params, -2.0);
    let energy = -2.6 * params.p0();
    for tt in [50.0, 200.0, 800.0] {
        let protocol = SweepProtocol::new(-2.0, 2.0, tt)?;
        let ens = sample_microcanonical(energy, -2.0, &params, side, 400, 7)?;
        let out = evolve_ensemble(&ens, &params, &protocol, &EnsembleOptions::default())?;
        let k = kruskal_return_probability(ens.action, &params, &protocol)?;
        println!(
            "T = {tt:5}: returned {:.3}  Kruskal {:.3}  (crossing at delta = {:.3?}, {} failed)",
            out.return_probability, k.return_probability, k.delta_s, out.failed
        );
    }
    Ok(())
}
