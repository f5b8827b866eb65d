//! Full forward-and-back sweeps from a low eigenstate at increasing N: adiabatic
//! return, a spread-out final distribution, and two separated groups.
//!
//! cargo run --release --example sweep_regimes

use dimer_hysteresis::experiment::regime;
use dimer_hysteresis::propagation::{propagate_mixture, split_final_distribution, Mixture, PropagationOptions};
use dimer_hysteresis::{ModelParams, SweepProtocol};

fn main() -> dimer_hysteresis::Result<()> {
    let protocol = SweepProtocol::new(-2.0, 2.0, 5000.0)?;
    for (n, level) in [(10, 1), (30, 1), (100, 3)] {
        let params = ModelParams::new(n, -3.0)?;
        let start = Mixture::single(&params, protocol.delta_initial(), level)?;
        let out = propagate_mixture(&start, &params, &protocol, &PropagationOptions::default())?;
        let split = split_final_distribution(&out.occupation, &start.distribution(params.dim()));
        println!(
            "N = {n:3}, level {level}: {:10} return {:?}  mass at initial level {:.4}  gap levels {:?}",
            regime(&split),
            split.return_probability.map(|p| (p * 1e4).round() / 1e4),
            split.mass_at_reference,
            split.gap_levels
        );
    }
    Ok(())
}
