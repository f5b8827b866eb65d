//! Forward sweep from the ground state: distance of each cascade variant to the exact
//! final distribution at the turning point.
//!
//! cargo run --release --example ica_variants

use dimer_hysteresis::ica::{build_schedule, compare_variants};
use dimer_hysteresis::propagation::{project_adiabatic, propagate, PropagationOptions, QuantumState};
use dimer_hysteresis::spectral::{detect_crossings, scan_window, ScanOptions};
use dimer_hysteresis::{ModelParams, SweepProtocol};

fn main() -> dimer_hysteresis::Result<()> {
    let params = ModelParams::new(100, -3.0)?;
    let protocol = SweepProtocol::new(-2.0, 2.0, 2500.0)?;
    let spectrum = scan_window(&params, -2.0, 2.0, ScanOptions::new(401))?;
    let schedule = build_schedule(&detect_crossings(&spectrum)?, &protocol);
    let start = QuantumState::eigenstate(&params, &protocol, 0)?;
    let tr = propagate(&start, &params, &protocol, &PropagationOptions::default().forward_only())?;
    let exact = project_adiabatic(&tr.final_state, &params)?;
    let cmp = compare_variants(&schedule, &protocol, 0, &exact.probabilities)?;
    for v in &cmp.variants {
        println!("{:>9}: L1 distance to exact {:.4}", v.variant.name(), v.l1_distance);
    }
    Ok(())
}
