//! Return probability against sweep time, exact and from the incoherent cascade, for
//! a single eigenstate and for a mixture of neighbouring eigenstates.
//!
//! cargo run --release --example return_probability

use dimer_hysteresis::ica::{build_schedule, ica_return_scan, IcaVariant};
use dimer_hysteresis::propagation::{return_probability_scan, Mixture, PropagationOptions};
use dimer_hysteresis::spectral::{detect_crossings, scan_window, ScanOptions};
use dimer_hysteresis::{ModelParams, SweepProtocol};

fn main() -> dimer_hysteresis::Result<()> {
    let params = ModelParams::new(100, -3.0)?;
    let protocol = SweepProtocol::new(-2.0, 2.0, 4000.0)?;
    let spectrum = scan_window(&params, -2.0, 2.0, ScanOptions::new(401))?;
    let schedule = build_schedule(&detect_crossings(&spectrum)?, &protocol);
    let times: Vec<f64> = (0..4).map(|k| 4000.0 + 50.0 * k as f64).collect();
    let opts = PropagationOptions::default().with_tolerance(1e-7);

    for (label, mix) in [
        ("single level 3", Mixture::single(&params, -2.0, 3)?),
        ("4-state mixture", Mixture::centred(&params, -2.0, 3, 4)?),
    ] {
        println!("{label}");
        let exact = return_probability_scan(&mix, &params, &protocol, &times, &opts)?;
        let ica = ica_return_scan(&mix, &params, &protocol, &schedule, IcaVariant::Improved, &times)?;
        for (e, i) in exact.iter().zip(&ica) {
            println!(
                "  T = {:6.0}  exact {:>8}  ica {:>8}",
                e.half_time,
                fmt(e.split.peak_return_probability()),
                fmt(i.split.peak_return_probability())
            );
        }
    }
    Ok(())
}

fn fmt(p: Option<f64>) -> String {
    p.map_or("mixed".into(), |p| format!("{p:.4}"))
}
