//! Single particle (N = 1): exact propagation through a linear sweep against the
//! Landau-Zener formula and the three cascade variants.
//!
//! cargo run --release --example landau_zener

use dimer_hysteresis::ica::{build_schedule, incoherent_cascade, lz_probability, IcaVariant};
use dimer_hysteresis::propagation::{project_adiabatic, propagate, LevelDistribution, PropagationOptions, QuantumState};
use dimer_hysteresis::spectral::{detect_crossings, scan_window, ScanOptions};
use dimer_hysteresis::{ModelParams, SweepProtocol};

fn main() -> dimer_hysteresis::Result<()> {
    let params = ModelParams::new(1, 0.0)?;
    let spectrum = scan_window(&params, -200.0, 200.0, ScanOptions::new(401))?;
    let crossings = detect_crossings(&spectrum)?;
    for rate in [2.0, 1.0, 0.5, 0.25, 0.1] {
        // sweep -200 -> 200 in time 400 / rate
        let protocol = SweepProtocol::new(-200.0, 200.0, 400.0 / rate)?;
        let start = QuantumState::eigenstate(&params, &protocol, 0)?;
        let tr = propagate(&start, &params, &protocol, &PropagationOptions::default().forward_only())?;
        let exact = project_adiabatic(&tr.final_state, &params)?.probabilities.0[1];
        let lz = lz_probability(1.0, rate, 1.0)?;
        let schedule = build_schedule(&crossings, &protocol).forward_only();
        print!("rate {rate:5}: exact {exact:.6e}  formula {lz:.6e}");
        for v in IcaVariant::ALL {
            let d = incoherent_cascade(&LevelDistribution::indicator(2, 0), &schedule, v, rate)?;
            print!("  {} {:.6e}", v.name(), d.0[1]);
        }
        println!();
    }
    Ok(())
}
