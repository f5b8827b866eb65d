//! Minimal level spacing against N: a finite limit below the critical interaction,
//! exponentially small tunnelling splittings above it.
//!
//! cargo run --release --example gap_scaling

use dimer_hysteresis::spectral::{min_gap, tunnelling_splitting};
use dimer_hysteresis::ModelParams;

fn main() -> dimer_hysteresis::Result<()> {
    println!("subcritical: min gap over delta in [-2, 2] vs sqrt(1 + u)");
    for u in [0.0, -0.5, -0.9] {
        for n in [20, 50, 100, 200] {
            let g = min_gap(&ModelParams::new(n, u)?, -2.0, 2.0, 401)?;
            println!("  u = {u:5.2}  N = {n:4}  gap = {:.5}  (limit {:.5})", g.gap, (1.0 + u).sqrt());
        }
    }
    println!("supercritical u = -3: ground doublet splitting at delta = 0");
    for n in (20..=40).step_by(4) {
        let s = tunnelling_splitting(&ModelParams::new(n, -3.0)?, 0)?.abs();
        println!("  N = {n:3}  splitting = {s:.4e}  ln = {:.4}", s.ln());
    }
    Ok(())
}
