//! Adiabatic levels and avoided crossings of a small dimer over a detuning window.
//!
//! cargo run --release --example adiabatic_spectrum

use dimer_hysteresis::spectral::{detect_crossings, scan_window, ScanOptions};
use dimer_hysteresis::ModelParams;

fn main() -> dimer_hysteresis::Result<()> {
    let params = ModelParams::new(20, -3.0)?;
    let spectrum = scan_window(&params, -2.0, 2.0, ScanOptions::new(201))?;
    let crossings = detect_crossings(&spectrum)?;

    println!("N = 20, u = -3: {} avoided crossings in [-2, 2]", crossings.len());
    println!("{:>5} {:>10} {:>12} {:>10} {:>9}", "pair", "delta_c", "gap", "slope", "reliable");
    for c in crossings.iter().take(15) {
        println!("{:>5} {:>10.5} {:>12.4e} {:>10.4} {:>9}", c.lower_level, c.delta_c, c.gap, c.slope, c.reliable);
    }
    if let Some(m) = spectrum.min_gap() {
        println!("smallest gap {:.3e} between levels {} and {} at delta = {:.4}", m.gap, m.lower_level, m.lower_level + 1, m.delta);
    }
    Ok(())
}
