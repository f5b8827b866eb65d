//! Histogram of the eigenvalues; above the critical interaction it peaks at the
//! classical separatrix energy.
//!
//! cargo run --release --example density_of_states

use dimer_hysteresis::semiclassics::{initial_side, lobe_areas};
use dimer_hysteresis::spectral::density_of_states;
use dimer_hysteresis::ModelParams;

fn main() -> dimer_hysteresis::Result<()> {
    let params = ModelParams::new(1000, -3.0)?;
    let dos = density_of_states(&params, 0.0, 40)?;
    let peak = dos.peak_bin();
    for (k, c) in dos.counts.iter().enumerate() {
        let mark = if k == peak { " <- peak" } else { "" };
        println!("{:10.2} {:4} {}{mark}", dos.edges[k], c, "#".repeat(c / 2));
    }
    let side = initial_side(&params, 0.0);
    if let Some(s) = lobe_areas(0.0, &params, side).unstable_point {
        println!("separatrix energy (quantum scale): {:.2}", s.energy + params.quantum_energy_offset());
    }
    Ok(())
}
