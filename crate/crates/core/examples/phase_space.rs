//! Mean-field phase space: stationary points, separatrix lobe areas along the sweep,
//! and where orbits of a given action meet the separatrix.
//!
//! cargo run --release --example phase_space

use std::f64::consts::PI;

use dimer_hysteresis::semiclassics::{delta_s_for_action, fixed_points, initial_side, lobe_areas, separatrix_window};
use dimer_hysteresis::ModelParams;

fn main() -> dimer_hysteresis::Result<()> {
    let params = ModelParams::new(1000, -3.0)?;
    let sphere = 4.0 * PI * params.p0();
    println!("separatrix window: {:?}", separatrix_window(&params));
    for f in fixed_points(0.0, &params) {
        println!("delta = 0: {:?} at q = {:.3}, p/p0 = {:.4}, E/N = {:.4}", f.stability, f.state.q, f.state.p / params.p0(), f.energy / 1000.0);
    }
    let side = initial_side(&params, -2.0);
    println!("lobe areas / 4 pi p0 ({side:?} lobe first)");
    for d in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        if let Some(a) = lobe_areas(d, &params, side).areas {
            println!("  delta = {d:5.2}: {:.4} {:.4} {:.4}", a.upper / sphere, a.lower / sphere, a.outside / sphere);
        }
    }
    for frac in [1e-6, 0.05, 0.1, 0.2] {
        let ds = delta_s_for_action(frac * sphere, &params, side)?;
        println!("action {frac:>6} of the sphere meets the separatrix at {ds:?}");
    }
    Ok(())
}
