//! Refinement of adjacent-level separations and avoided-crossing extraction.
//!
//! Each separation `f(delta) = E_{i+1} - E_i` is sampled together with its derivative
//! (Hellmann-Feynman slopes). A cell `[a, b]` is accepted when the end slopes share a
//! sign and the cubic-Hermite consistency `f_b - f_a ~ (d_a + d_b) w / 2` holds; other
//! cells are split at the intersection of the end tangents, which lands on a narrow
//! crossing's kink in one step. Minima are then polished with a secant on `d(f^2)`,
//! exact for an isolated two-level hyperbola.

use serde::{Deserialize, Serialize};

use super::{AdiabaticSpectrum, SepSample, SeparationTrace};
use crate::error::Result;
use crate::model::{build_hamiltonian, detuning_slope, tunnelling_element, ModelParams};
use crate::tridiag::{self, SymTridiag};

/// Nearest local maximum of the separation used to define the asymptotic slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMax {
    pub delta_max: f64,
    pub gap_max: f64,
}

/// Diabatic content of the two-level subspace at a crossing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiabaticPair {
    /// Difference of the diabatic detuning slopes: eigenvalue spread of the imbalance
    /// operator restricted to the two adiabatic states.
    pub slope_difference: f64,
    /// Dominant Fock index of each diabatic state (lower slope first).
    pub fock_states: (usize, usize),
    /// Fock-basis matrix element between the two dominant states (zero unless adjacent).
    pub direct_coupling: f64,
}

/// One strict local minimum of an adjacent-level separation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvoidedCrossing {
    pub lower_level: usize,
    pub delta_c: f64,
    /// Minimal separation, clamped to the double-precision floor when unreliable.
    pub gap: f64,
    pub reliable: bool,
    /// `None` only for the lowest pair when no reference exists (then `slope` is the
    /// diabatic slope difference).
    pub reference_max: Option<ReferenceMax>,
    /// Asymptotic slope `gap_max / |delta_max - delta_c|`.
    pub slope: f64,
    pub diabatic: DiabaticPair,
}

/// Evaluate levels `i`, `i + 1` and their slopes at `delta`, bracketing the eigenvalues
/// around a nearby sample (level slopes are bounded by `N / 2`).
pub(crate) fn evaluate_pair(params: &ModelParams, i: usize, delta: f64, near: &SepSample) -> SepSample {
    let h = build_hamiltonian(params, delta);
    let t = SymTridiag::from_hamiltonian(&h);
    let reach = 0.5 * params.n_particles() as f64 * (delta - near.delta).abs() + 8.0 * t.eigen_tolerance();
    let lo = t.eigenvalue_in(i, near.lower_energy - reach, near.lower_energy + reach);
    let upper = near.lower_energy + near.gap;
    let hi = t.eigenvalue_in(i + 1, (upper - reach).max(lo), upper + reach);
    let (s_lo, s_hi) = pair_slopes(params, &t, lo, hi);
    SepSample {
        delta,
        lower_energy: lo,
        gap: hi - lo,
        slope: s_hi - s_lo,
    }
}

fn pair_vectors(t: &SymTridiag, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
    let v_lo = tridiag::inverse_iteration(t, lo, &[], 1);
    let pert = 10.0 * f64::EPSILON * t.norm();
    let shift = if hi - lo < pert { lo + pert } else { hi };
    let close = hi - lo < 1e-7 * t.norm();
    let deflate = if close { std::slice::from_ref(&v_lo) } else { &[] };
    let v_hi = tridiag::inverse_iteration(t, shift, deflate, 2);
    (v_lo, v_hi)
}

fn pair_slopes(params: &ModelParams, t: &SymTridiag, lo: f64, hi: f64) -> (f64, f64) {
    let (v_lo, v_hi) = pair_vectors(t, lo, hi);
    let b = |k| detuning_slope(params, k);
    (
        tridiag::diagonal_expectation(&v_lo, b),
        tridiag::diagonal_expectation(&v_hi, b),
    )
}

/// Diabatic decomposition of the pair `(i, i + 1)` at `delta`.
pub(crate) fn diabatic_pair(params: &ModelParams, i: usize, delta: f64) -> DiabaticPair {
    let h = build_hamiltonian(params, delta);
    let t = SymTridiag::from_hamiltonian(&h);
    let lo = t.eigenvalue(i);
    let hi = t.eigenvalue(i + 1);
    let (a, b) = pair_vectors(&t, lo, hi);
    let w = |k| detuning_slope(params, k);
    let m11 = tridiag::diagonal_expectation(&a, w);
    let m22 = tridiag::diagonal_expectation(&b, w);
    let m12: f64 = a.iter().zip(&b).enumerate().map(|(k, (x, y))| x * y * w(k)).sum();
    let half_diff = 0.5 * (m22 - m11);
    let spread = 2.0 * half_diff.hypot(m12);
    // eigenvector of [[m11, m12], [m12, m22]] for the lower eigenvalue
    let theta = 0.5 * (2.0 * m12).atan2(m11 - m22);
    let (c, s) = (theta.cos(), theta.sin());
    let dominant = |ca: f64, cb: f64| {
        a.iter()
            .zip(&b)
            .map(|(x, y)| (ca * x + cb * y).powi(2))
            .enumerate()
            .max_by(|p, q| p.1.total_cmp(&q.1))
            .map(|p| p.0)
            .unwrap_or(0)
    };
    // (c, s) diagonalizes towards the larger eigenvalue; (-s, c) towards the smaller
    let k_high = dominant(c, s);
    let k_low = dominant(-s, c);
    let (k_a, k_b) = if w(k_low) <= w(k_high) { (k_low, k_high) } else { (k_high, k_low) };
    let direct_coupling = if k_a.abs_diff(k_b) == 1 {
        tunnelling_element(params, k_a.min(k_b))
    } else {
        0.0
    };
    DiabaticPair {
        slope_difference: spread,
        fock_states: (k_a, k_b),
        direct_coupling,
    }
}

/// Height where the end tangents of a cell intersect, if they do inside it.
fn tangent_apex(a: &SepSample, b: &SepSample) -> Option<(f64, f64)> {
    let denom = a.slope - b.slope;
    if denom.abs() <= 1e-12 * (a.slope.abs() + b.slope.abs()) {
        return None;
    }
    let x = (b.gap - a.gap + a.slope * a.delta - b.slope * b.delta) / denom;
    (x.is_finite() && x > a.delta && x < b.delta).then(|| (x, a.gap + a.slope * (x - a.delta)))
}

/// Whether a cell needs no further samples.
fn cell_ok(a: &SepSample, b: &SepSample, val_tol: f64) -> bool {
    let w = b.delta - a.delta;
    if a.slope < 0.0 && b.slope > 0.0 {
        // single minimum: done once the tangent bound pins it to 1%
        let low = a.gap.min(b.gap);
        return match tangent_apex(a, b) {
            Some((_, h)) => low - h <= 0.01 * low + val_tol,
            None => false,
        };
    }
    if a.slope > 0.0 && b.slope < 0.0 {
        let high = a.gap.max(b.gap);
        return match tangent_apex(a, b) {
            Some((_, h)) => h - high <= 1e-6 * high + val_tol,
            None => false,
        };
    }
    if a.slope * b.slope <= 0.0 {
        return false;
    }
    let herm = (b.gap - a.gap - 0.5 * (a.slope + b.slope) * w).abs();
    herm <= val_tol + 0.01 * (b.gap - a.gap).abs() + 1e-9 * (a.slope.abs() + b.slope.abs()) * w
}

fn split_point(a: &SepSample, b: &SepSample) -> f64 {
    let w = b.delta - a.delta;
    let mid = a.delta + 0.5 * w;
    let x = if a.slope < 0.0 && b.slope > 0.0 {
        // secant on d(f^2)/2 = f f', exact at a two-level hyperbola's vertex
        let ga = a.gap * a.slope;
        let gb = b.gap * b.slope;
        a.delta - ga * w / (gb - ga)
    } else {
        tangent_apex(a, b).map_or(mid, |p| p.0)
    };
    if !x.is_finite() {
        return mid;
    }
    x.clamp(a.delta + 0.02 * w, b.delta - 0.02 * w)
}

/// Refine one pair's separation, starting from the base-grid samples.
pub(crate) fn refine_pair(
    params: &ModelParams,
    i: usize,
    base: Vec<SepSample>,
    floor: f64,
    resolution: f64,
    cell_budget: usize,
) -> SeparationTrace {
    let val_tol = 100.0 * floor;
    let mut samples = Vec::with_capacity(base.len() * 2);
    let mut unresolved = Vec::new();
    for cell in base.windows(2) {
        samples.push(cell[0]);
        let mut fresh = Vec::new();
        let mut stack = vec![(cell[0], cell[1])];
        let mut used = 0;
        while let Some((a, b)) = stack.pop() {
            if cell_ok(&a, &b, val_tol) || b.delta - a.delta <= resolution {
                continue;
            }
            if used >= cell_budget {
                unresolved.push((a.delta, b.delta));
                continue;
            }
            let x = split_point(&a, &b);
            let near = if x - a.delta < b.delta - x { &a } else { &b };
            let s = evaluate_pair(params, i, x, near);
            used += 1;
            fresh.push(s);
            stack.push((a, s));
            stack.push((s, b));
        }
        samples.extend(fresh);
    }
    samples.push(*base.last().unwrap());
    samples.sort_by(|p, q| p.delta.total_cmp(&q.delta));
    samples.dedup_by(|p, q| p.delta == q.delta);

    // polish every minimum
    for k in extrema(&samples, floor).into_iter().filter(|e| e.1 == Extremum::Min) {
        let polished = polish_minimum(params, i, &samples, k.0, floor);
        samples.extend(polished);
    }
    samples.sort_by(|p, q| p.delta.total_cmp(&q.delta));
    samples.dedup_by(|p, q| p.delta == q.delta);
    unresolved.sort_by(|p, q| p.0.total_cmp(&q.0));
    SeparationTrace {
        lower_level: i,
        samples,
        unresolved,
    }
}

fn polish_minimum(params: &ModelParams, i: usize, s: &[SepSample], k: usize, floor: f64) -> Vec<SepSample> {
    let mut left = s[k - 1];
    let mut right = s[k + 1];
    let mut best = s[k];
    let mut out = Vec::new();
    if best.gap <= floor {
        return out;
    }
    // make sure the bracket sides carry the slope signs of a minimum
    if best.slope < 0.0 {
        left = best;
    } else if best.slope > 0.0 {
        right = best;
    }
    for _ in 0..30 {
        let w = right.delta - left.delta;
        if w <= 0.0 {
            break;
        }
        let gl = left.gap * left.slope;
        let gr = right.gap * right.slope;
        let mut x = if gl < 0.0 && gr > 0.0 {
            left.delta - gl * w / (gr - gl)
        } else {
            left.delta + 0.5 * w
        };
        if !(x > left.delta && x < right.delta) {
            x = left.delta + 0.5 * w;
        }
        if x <= left.delta || x >= right.delta {
            break;
        }
        let p = evaluate_pair(params, i, x, &best);
        out.push(p);
        let improvement = best.gap - p.gap;
        if p.gap < best.gap {
            best = p;
        }
        if p.slope < 0.0 {
            left = p;
        } else {
            right = p;
        }
        if best.gap <= floor || improvement.abs() < 0.01 * best.gap {
            break;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Extremum {
    Min,
    Max,
}

/// Interior strict extrema of the sampled separation after discarding min/max pairs
/// whose height difference is below `prominence`.
pub(crate) fn extrema(s: &[SepSample], prominence: f64) -> Vec<(usize, Extremum)> {
    let mut raw: Vec<(usize, Extremum)> = Vec::new();
    let mut dir = 0i8;
    let mut pivot = 0;
    for k in 1..s.len() {
        let d = s[k].gap - s[k - 1].gap;
        let nd = if d > 0.0 {
            1
        } else if d < 0.0 {
            -1
        } else {
            0
        };
        if nd == 0 {
            continue;
        }
        if dir != 0 && nd != dir {
            raw.push((pivot, if dir < 0 { Extremum::Min } else { Extremum::Max }));
        }
        dir = nd;
        pivot = k;
    }
    // iteratively remove the least prominent adjacent pair
    loop {
        let mut worst: Option<(usize, f64)> = None;
        for j in 0..raw.len().saturating_sub(1) {
            let h = (s[raw[j].0].gap - s[raw[j + 1].0].gap).abs();
            if h < prominence && worst.map_or(true, |w| h < w.1) {
                worst = Some((j, h));
            }
        }
        match worst {
            Some((j, _)) => {
                // keep the more extreme member of each kind among neighbours
                raw.drain(j..j + 2);
                // merge consecutive same-kind extrema left behind
                let mut k = 0;
                while k + 1 < raw.len() {
                    if raw[k].1 == raw[k + 1].1 {
                        let (a, b) = (raw[k], raw[k + 1]);
                        let keep_a = match a.1 {
                            Extremum::Min => s[a.0].gap <= s[b.0].gap,
                            Extremum::Max => s[a.0].gap >= s[b.0].gap,
                        };
                        raw.remove(if keep_a { k + 1 } else { k });
                    } else {
                        k += 1;
                    }
                }
            }
            None => break,
        }
    }
    raw
}

/// One avoided crossing per strict local minimum of every refined separation.
pub fn detect_crossings(spectrum: &AdiabaticSpectrum) -> Result<Vec<AvoidedCrossing>> {
    let params = &spectrum.params;
    let floor = spectrum.gap_floor;
    let per_pair: Vec<Vec<(usize, Extremum)>> =
        spectrum.traces.iter().map(|t| extrema(&t.samples, floor)).collect();
    let minima_of = |p: usize| -> Vec<f64> {
        per_pair.get(p).map_or(Vec::new(), |ext| {
            ext.iter()
                .filter(|e| e.1 == Extremum::Min)
                .map(|e| spectrum.traces[p].samples[e.0].delta)
                .collect()
        })
    };
    let second_pair_minima = minima_of(1);
    let mut out = Vec::new();
    for (trace, ext) in spectrum.traces.iter().zip(&per_pair) {
        let i = trace.lower_level;
        let s = &trace.samples;
        for (j, &(k, kind)) in ext.iter().enumerate() {
            if kind != Extremum::Min {
                continue;
            }
            let at = s[k];
            let reliable = at.gap >= floor;
            let gap = at.gap.max(floor);
            let left = ext[..j].iter().rev().find(|e| e.1 == Extremum::Max).map(|e| s[e.0]);
            let right = ext[j + 1..].iter().find(|e| e.1 == Extremum::Max).map(|e| s[e.0]);
            let nearest_own = match (left, right) {
                (Some(l), Some(r)) => Some(if at.delta - l.delta <= r.delta - at.delta { l } else { r }),
                (l, r) => l.or(r),
            };
            let reference = if i == 0 && !second_pair_minima.is_empty() {
                let dm = *second_pair_minima
                    .iter()
                    .min_by(|a, b| (*a - at.delta).abs().total_cmp(&(*b - at.delta).abs()))
                    .unwrap();
                let p = evaluate_pair(params, 0, dm, &nearest_sample(s, dm));
                Some(ReferenceMax {
                    delta_max: dm,
                    gap_max: p.gap,
                })
            } else {
                nearest_own.map(|m| ReferenceMax {
                    delta_max: m.delta,
                    gap_max: m.gap,
                })
            };
            let diabatic = diabatic_pair(params, i, at.delta);
            let slope = match reference {
                Some(r) if r.delta_max != at.delta => r.gap_max / (r.delta_max - at.delta).abs(),
                Some(_) => continue,
                None if i == 0 => diabatic.slope_difference,
                None => continue,
            };
            out.push(AvoidedCrossing {
                lower_level: i,
                delta_c: at.delta,
                gap,
                reliable,
                reference_max: reference,
                slope,
                diabatic,
            });
        }
    }
    Ok(out)
}

fn nearest_sample(s: &[SepSample], delta: f64) -> SepSample {
    let k = s.partition_point(|p| p.delta < delta).min(s.len() - 1);
    if k > 0 && (s[k - 1].delta - delta).abs() < (s[k].delta - delta).abs() {
        s[k - 1]
    } else {
        s[k]
    }
}
