//! Sublevel-set areas, separatrix lobes and Kruskal's branching ratio.
//!
//! At fixed `z` the set `{q : h(q, z) < e}` is a single arc around `q = 0` of length
//! `2 acos(c)` with `c = (g z^2 + d z - e) / (Omega sqrt(1 - z^2))`, clamped to
//! `[-1, 1]`. Areas of sublevel sets are therefore one-dimensional integrals over `z`,
//! split where `c = +-1` (square-root kinks) and at the saddle.
//!
//! Everything is computed for `U <= 0`. For `U > 0` the identity
//! `h(q + pi; U, delta) = -h(q; -U, -delta)` maps superlevel sets onto sublevel sets
//! of the attractive problem.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::io::Write;

use quadrature::double_exponential;
use serde::Serialize;

use super::{monotone_roots, reduced_fixed_points, ClassicalState, FixedPoint, Reduced, Stability};
use crate::error::{Error, Result};
use crate::model::{ModelParams, SweepProtocol};

const QUAD_TOL: f64 = 1e-14;

/// Which lobe (relative to the saddle's imbalance) holds the initial ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// Lobe at larger `p` than the saddle.
    Above,
    Below,
}

/// Reduced Hamiltonian in the attractive frame, and the sign relating its energies to
/// the physical ones.
fn frame(params: &ModelParams, delta: f64) -> (Reduced, f64) {
    let red = Reduced::new(params, delta);
    if red.g > 0.0 {
        (Reduced { g: -red.g, d: -red.d, ..red }, -1.0)
    } else {
        (red, 1.0)
    }
}

/// Arc length of `{q : h(q, z) < e}`.
fn arc(red: &Reduced, z: f64, e: f64) -> f64 {
    let num = red.g * z * z + red.d * z - e;
    let r = (1.0 - z * z).max(0.0).sqrt();
    if r == 0.0 {
        return if num < 0.0 { TAU } else { 0.0 };
    }
    2.0 * (num / (red.omega * r)).clamp(-1.0, 1.0).acos()
}

/// Points in `(-1, 1)` where the arc closes (`c = 1`, `true`) or fills the circle
/// (`c = -1`, `false`), sorted.
fn breakpoints(red: &Reduced, e: f64) -> Vec<(f64, bool)> {
    // monotone pieces of c = +-1 in t = asin z are bounded by the fixed points
    let mut out = Vec::new();
    for (sign, closes) in [(1.0, true), (-1.0, false)] {
        let f = |t: f64| red.g * t.sin().powi(2) + red.d * t.sin() - e - sign * red.omega * t.cos();
        let df = |t: f64| red.g * (2.0 * t).sin() + red.d * t.cos() + sign * red.omega * t.sin();
        for t in monotone_roots(f, df, -FRAC_PI_2, FRAC_PI_2) {
            let z = t.sin();
            if z > -1.0 && z < 1.0 {
                out.push((z, closes));
            }
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    double_exponential::integrate(f, a, b, QUAD_TOL).integral
}

/// `(inside, outside)` areas of the sublevel set restricted to `a <= z <= b`, split at
/// every knot in between.
fn slab_areas(red: &Reduced, e: f64, a: f64, b: f64, knots: &[f64]) -> (f64, f64) {
    let mut pts = vec![a];
    pts.extend(knots.iter().copied().filter(|&z| z > a && z < b));
    pts.push(b);
    let mut inside = 0.0;
    let mut outside = 0.0;
    for w in pts.windows(2) {
        inside += integrate(|z| arc(red, z, e), w[0], w[1]);
        outside += integrate(|z| TAU - arc(red, z, e), w[0], w[1]);
    }
    (inside, outside)
}

/// The saddle `(z, e)` of the attractive frame, if any.
fn saddle(red: &Reduced) -> Option<(f64, f64)> {
    reduced_fixed_points(red)
        .into_iter()
        .find(|f| f.2 == Stability::Saddle)
        .map(|(q, z, _)| (z, red.energy(q, z)))
}

/// Minima of the attractive frame as `(z, e)`, lowest first.
fn minima(red: &Reduced) -> Vec<(f64, f64)> {
    reduced_fixed_points(red)
        .into_iter()
        .filter(|f| f.2 == Stability::Minimum)
        .map(|(q, z, _)| (z, red.energy(q, z)))
        .collect()
}

/// Phase-space areas of the two separatrix lobes and the remainder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LobeAreas {
    /// Lobe holding the initial ensemble.
    pub upper: f64,
    /// The other lobe.
    pub lower: f64,
    pub outside: f64,
}

impl LobeAreas {
    pub fn total(&self) -> f64 {
        self.upper + self.lower + self.outside
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeparatrixGeometry {
    pub delta: f64,
    pub side: Side,
    pub unstable_point: Option<FixedPoint>,
    pub areas: Option<LobeAreas>,
}

impl SeparatrixGeometry {
    pub fn exists(&self) -> bool {
        self.areas.is_some()
    }
}

/// Lobe areas at `delta`, labelling the lobe on `side` of the saddle as the upper one.
pub fn lobe_areas(delta: f64, params: &ModelParams, side: Side) -> SeparatrixGeometry {
    let (red, sign) = frame(params, delta);
    let p0 = params.p0();
    let Some((zs, es)) = saddle(&red) else {
        return SeparatrixGeometry { delta, side, unstable_point: None, areas: None };
    };
    let mut knots: Vec<f64> = breakpoints(&red, es).into_iter().map(|b| b.0).collect();
    knots.push(zs);
    let (above, out_hi) = slab_areas(&red, es, zs, 1.0, &knots);
    let (below, out_lo) = slab_areas(&red, es, -1.0, zs, &knots);
    let (upper, lower) = match side {
        Side::Above => (above, below),
        Side::Below => (below, above),
    };
    let q = if sign > 0.0 { 0.0 } else { -PI };
    SeparatrixGeometry {
        delta,
        side,
        unstable_point: Some(FixedPoint {
            state: ClassicalState { q, p: p0 * zs },
            energy: sign * p0 * es,
            stability: Stability::Saddle,
        }),
        areas: Some(LobeAreas {
            upper: p0 * upper,
            lower: p0 * lower,
            outside: p0 * (out_hi + out_lo),
        }),
    }
}

/// Side of the lowest-energy region at the start of the sweep.
pub fn initial_side(params: &ModelParams, delta_initial: f64) -> Side {
    let (red, _) = frame(params, delta_initial);
    match minima(&red).first() {
        Some(&(z, _)) if z < 0.0 => Side::Below,
        _ => Side::Above,
    }
}

/// Detuning interval in which a separatrix exists, `|delta| < Omega (|u|^(2/3) - 1)^(3/2)`.
pub fn separatrix_window(params: &ModelParams) -> Option<(f64, f64)> {
    let u = params.interaction_u().abs();
    if u <= 1.0 {
        return None;
    }
    let dc = params.omega() * (u.powf(2.0 / 3.0) - 1.0).powf(1.5);
    Some((-dc, dc))
}

/// Area enclosed by the orbit of energy `energy` around the minimum on `side`
/// (the connected sublevel component containing it).
pub fn action_of_energy(energy: f64, delta: f64, params: &ModelParams, side: Side) -> Result<f64> {
    let (red, sign) = frame(params, delta);
    let p0 = params.p0();
    let e = sign * energy / p0;
    let (lo, hi) = component_bounds(&red, e, side).map_err(|reason| Error::BadContour { energy, reason })?;
    let knots: Vec<f64> = breakpoints(&red, e).into_iter().map(|b| b.0).collect();
    Ok(p0 * slab_areas(&red, e, lo, hi, &knots).0)
}

/// Sublevel component bounding an orbit, with a starting point on the orbit.
pub(crate) struct OrbitComponent {
    pub action: f64,
    /// Physical Bloch vector on the contour.
    pub start: [f64; 3],
}

pub(crate) fn orbit_component(energy: f64, delta: f64, params: &ModelParams, side: Side) -> Result<OrbitComponent> {
    let (red, sign) = frame(params, delta);
    let p0 = params.p0();
    let e = sign * energy / p0;
    let (lo, hi) = component_bounds(&red, e, side).map_err(|reason| Error::BadContour { energy, reason })?;
    if let Some((zs, es)) = saddle(&red) {
        if ((e - es) / es.abs().max(1.0)).abs() < 1e-9 && zs > lo && zs < hi {
            return Err(Error::BadContour { energy, reason: "separatrix energy".into() });
        }
    }
    let bps = breakpoints(&red, e);
    let knots: Vec<f64> = bps.iter().map(|b| b.0).collect();
    let action = p0 * slab_areas(&red, e, lo, hi, &knots).0;
    // a slice where the orbit has exactly two points q = +-arc / 2
    let z = (1..64)
        .map(|k| lo + (hi - lo) * k as f64 / 64.0)
        .find(|&z| {
            let a = arc(&red, z, e);
            a > 1e-3 && a < TAU - 1e-3
        })
        .ok_or_else(|| Error::BadContour { energy, reason: "no regular slice".into() })?;
    let qf = 0.5 * arc(&red, z, e);
    let q = if sign > 0.0 { qf } else { qf + PI };
    let r = (1.0 - z * z).sqrt();
    Ok(OrbitComponent { action, start: [r * q.cos(), r * q.sin(), z] })
}

/// `z` interval of the sublevel component at `e` around the minimum on `side`.
fn component_bounds(red: &Reduced, e: f64, side: Side) -> std::result::Result<(f64, f64), String> {
    let mins = minima(red);
    let anchor = match (side, mins.len()) {
        (_, 0) => return Err("no minimum".into()),
        (_, 1) => mins[0],
        (Side::Above, _) => *mins.iter().max_by(|a, b| a.0.total_cmp(&b.0)).unwrap(),
        (Side::Below, _) => *mins.iter().min_by(|a, b| a.0.total_cmp(&b.0)).unwrap(),
    };
    if e <= anchor.1 {
        return Err("below the minimum".into());
    }
    let bps = breakpoints(red, e);
    let lo = bps.iter().rev().find(|b| b.1 && b.0 < anchor.0).map_or(-1.0, |b| b.0);
    let hi = bps.iter().find(|b| b.1 && b.0 > anchor.0).map_or(1.0, |b| b.0);
    Ok((lo, hi))
}

/// Energy whose orbit around the minimum on `side` encloses `action`.
pub fn energy_of_action(action: f64, delta: f64, params: &ModelParams, side: Side) -> Result<f64> {
    let (red, sign) = frame(params, delta);
    let p0 = params.p0();
    if !(action > 0.0 && action < TAU * 2.0 * p0) {
        return Err(Error::InvalidParameter { name: "action", reason: format!("{action} outside (0, 4 pi p0)") });
    }
    let mins = minima(&red);
    let lo = match side {
        _ if mins.len() == 1 => mins[0].1,
        Side::Above => mins.iter().max_by(|a, b| a.0.total_cmp(&b.0)).unwrap().1,
        Side::Below => mins.iter().min_by(|a, b| a.0.total_cmp(&b.0)).unwrap().1,
    };
    let hi = red.omega + red.g.abs() + red.d.abs();
    let f = |e: f64| action_of_energy(sign * p0 * e, delta, params, side).unwrap_or(0.0) - action;
    let e = super::bisect(&f, lo + 1e-15 * lo.abs().max(1.0), hi);
    Ok(sign * p0 * e)
}

/// Detuning at which the shrinking lobe on `side` has area `action`, or `None` when the
/// orbit never meets the separatrix in that lobe.
pub fn delta_s_for_action(action: f64, params: &ModelParams, side: Side) -> Result<Option<f64>> {
    let Some((lo, hi)) = separatrix_window(params) else {
        return Ok(None);
    };
    let margin = 1e-9 * (hi - lo);
    let (a, b) = (lo + margin, hi - margin);
    let upper = |d: f64| lobe_areas(d, params, side).areas.map_or(0.0, |x| x.upper);
    let (fa, fb) = (upper(a) - action, upper(b) - action);
    if fa * fb > 0.0 {
        // lobe never as small as the orbit, or the orbit never fits inside the lobe
        return Ok(None);
    }
    let f = |d: f64| upper(d) - action;
    Ok(Some(super::bisect(&f, a, b)))
}

/// Kruskal's quasi-static return probability for an orbit of given action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KruskalResult {
    pub action: f64,
    pub side: Side,
    /// Detuning of the separatrix crossing, `None` when the sweep never reaches it.
    pub delta_s: Option<f64>,
    pub return_probability: f64,
    /// `d/d delta` of `(upper, lower, outside)` at the crossing.
    pub growth_rates: Option<[f64; 3]>,
}

/// Return probability from the ratio of the area growth rates at the crossing.
///
/// On the forward leg the initial lobe and the outside shrink while the other lobe
/// grows, so the ensemble is captured by the other lobe with an action equal to that
/// lobe's area at `delta_s`. On the way back it leaves that lobe where the lobe area
/// returns to the same value, which is again `delta_s`, and splits between the
/// re-growing initial lobe and the outside in proportion to their growth rates.
pub fn kruskal_return_probability(action: f64, params: &ModelParams, protocol: &SweepProtocol) -> Result<KruskalResult> {
    let side = initial_side(params, protocol.delta_initial());
    let ds = delta_s_for_action(action, params, side)?;
    let crossing = ds.filter(|&d| d >= protocol.delta_initial() && d <= protocol.delta_turn());
    let Some(d) = crossing else {
        return Ok(KruskalResult { action, side, delta_s: None, return_probability: 1.0, growth_rates: None });
    };
    let (lo, hi) = separatrix_window(params).unwrap();
    let h = 1e-3f64.min(0.2 * (d - lo)).min(0.2 * (hi - d));
    let areas = |x: f64| -> Result<[f64; 3]> {
        let a = lobe_areas(x, params, side).areas.ok_or(Error::NoSeparatrix { delta: x })?;
        Ok([a.upper, a.lower, a.outside])
    };
    let central = |h: f64| -> Result<[f64; 3]> {
        let (p, m) = (areas(d + h)?, areas(d - h)?);
        Ok([0, 1, 2].map(|k| (p[k] - m[k]) / (2.0 * h)))
    };
    let (coarse, fine) = (central(h)?, central(0.5 * h)?);
    let rates = [0, 1, 2].map(|k| (4.0 * fine[k] - coarse[k]) / 3.0);
    let [du, dl, do_] = rates;
    // forward motion is increasing delta for the lobe above the saddle
    let s = match side {
        Side::Above => 1.0,
        Side::Below => -1.0,
    };
    if !(s * du < 0.0 && s * do_ < 0.0 && s * dl > 0.0) {
        return Err(Error::GrowthPattern { delta: d, du, dl, do_ });
    }
    Ok(KruskalResult {
        action,
        side,
        delta_s: Some(d),
        return_probability: du / (du + do_),
        growth_rates: Some(rates),
    })
}

/// CSV table of lobe areas over a list of detunings.
pub fn write_area_table<W: Write>(mut out: W, params: &ModelParams, side: Side, deltas: &[f64]) -> Result<()> {
    writeln!(out, "delta,exists,separatrix_energy,upper,lower,outside,total")?;
    for &d in deltas {
        let g = lobe_areas(d, params, side);
        match (g.areas, g.unstable_point) {
            (Some(a), Some(u)) => writeln!(
                out,
                "{d:.12e},true,{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                u.energy,
                a.upper,
                a.lower,
                a.outside,
                a.total()
            )?,
            _ => writeln!(out, "{d:.12e},false,,,,,")?,
        }
    }
    Ok(())
}
