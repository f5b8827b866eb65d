//! Independent crossing approximation: Landau-Zener probabilities per avoided crossing
//! and the incoherent cascade over the forward and backward legs.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Leg, ModelParams, SweepProtocol};
use crate::propagation::{
    split_final_distribution, AdiabaticOccupation, FinalSplit, LevelDistribution, Mixture,
};
use crate::spectral::{eigen_at, AvoidedCrossing};

/// Exponents below this give `P = 1` exactly.
const EXPONENT_CUTOFF: f64 = 1e-12;

/// How gap and slope are read off an avoided crossing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IcaVariant {
    /// Fock-basis coupling and diabatic slopes; only adjacent diabatic states couple.
    Standard,
    /// Adiabatic gap with diabatic slopes.
    Modified,
    /// Adiabatic gap with the asymptotic slope from the nearest separation maximum.
    Improved,
}

impl IcaVariant {
    pub const ALL: [IcaVariant; 3] = [IcaVariant::Standard, IcaVariant::Modified, IcaVariant::Improved];

    pub fn name(self) -> &'static str {
        match self {
            IcaVariant::Standard => "standard",
            IcaVariant::Modified => "modified",
            IcaVariant::Improved => "improved",
        }
    }
}

impl std::str::FromStr for IcaVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(IcaVariant::Standard),
            "modified" => Ok(IcaVariant::Modified),
            "improved" => Ok(IcaVariant::Improved),
            other => Err(Error::Config(format!("unknown ICA variant '{other}'"))),
        }
    }
}

/// Diabatic transition probability `exp(-pi gap^2 / (2 rate slope))`.
pub fn lz_probability(gap: f64, sweep_rate: f64, slope: f64) -> Result<f64> {
    if !(sweep_rate > 0.0) {
        return Err(Error::Domain { what: "sweep_rate", value: sweep_rate, lo: 0.0, hi: f64::INFINITY });
    }
    if !(slope > 0.0) {
        return Err(Error::Domain { what: "slope", value: slope, lo: 0.0, hi: f64::INFINITY });
    }
    if !(gap >= 0.0) {
        return Err(Error::Domain { what: "gap", value: gap, lo: 0.0, hi: f64::INFINITY });
    }
    let x = std::f64::consts::PI * gap * gap / (2.0 * sweep_rate * slope);
    Ok(if x < EXPONENT_CUTOFF { 1.0 } else { (-x).exp() })
}

/// Diabatic probability of one crossing under `variant`.
pub fn transition_probability(c: &AvoidedCrossing, variant: IcaVariant, sweep_rate: f64) -> Result<f64> {
    match variant {
        IcaVariant::Standard => {
            let (a, b) = c.diabatic.fock_states;
            if a.abs_diff(b) != 1 {
                return Ok(1.0);
            }
            lz_probability(2.0 * c.diabatic.direct_coupling.abs(), sweep_rate, 1.0)
        }
        _ if !c.reliable => Ok(1.0),
        IcaVariant::Modified => lz_probability(c.gap, sweep_rate, c.diabatic.slope_difference),
        IcaVariant::Improved => lz_probability(c.gap, sweep_rate, c.slope),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScheduledCrossing {
    pub crossing: AvoidedCrossing,
    pub leg: Leg,
}

/// Crossings in encounter order over the sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossingSchedule {
    pub entries: Vec<ScheduledCrossing>,
}

impl CrossingSchedule {
    pub fn leg(&self, leg: Leg) -> impl Iterator<Item = &ScheduledCrossing> {
        self.entries.iter().filter(move |e| e.leg == leg)
    }

    /// The forward leg alone.
    pub fn forward_only(&self) -> Self {
        Self {
            entries: self.leg(Leg::Forward).copied().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut out: W, variant: IcaVariant, sweep_rate: f64) -> Result<()> {
        writeln!(out, "order,leg,lower_level,delta_c,gap,reliable,slope,diabatic_slope,probability")?;
        for (k, e) in self.entries.iter().enumerate() {
            let c = &e.crossing;
            let p = transition_probability(c, variant, sweep_rate)?;
            let leg = match e.leg {
                Leg::Forward => "forward",
                Leg::Backward => "backward",
            };
            writeln!(
                out,
                "{k},{leg},{},{:.12e},{:.6e},{},{:.9e},{:.9e},{:.12e}",
                c.lower_level, c.delta_c, c.gap, c.reliable, c.slope, c.diabatic.slope_difference, p
            )?;
        }
        Ok(())
    }
}

/// Order crossings inside the swept window: ascending `delta_c` forward, the exact
/// reverse backward. Equal `delta_c` is broken by ascending lower level.
pub fn build_schedule(crossings: &[AvoidedCrossing], protocol: &SweepProtocol) -> CrossingSchedule {
    let (lo, hi) = (protocol.delta_initial(), protocol.delta_turn());
    let mut fwd: Vec<AvoidedCrossing> =
        crossings.iter().filter(|c| c.delta_c >= lo && c.delta_c <= hi).copied().collect();
    fwd.sort_by(|a, b| a.delta_c.total_cmp(&b.delta_c).then(a.lower_level.cmp(&b.lower_level)));
    let mut entries: Vec<ScheduledCrossing> =
        fwd.iter().map(|&crossing| ScheduledCrossing { crossing, leg: Leg::Forward }).collect();
    entries.extend(fwd.iter().rev().map(|&crossing| ScheduledCrossing { crossing, leg: Leg::Backward }));
    CrossingSchedule { entries }
}

/// Pass `initial` through every crossing, mixing the two adjacent levels with the
/// diabatic probability. Levels beyond the distribution are ignored.
pub fn incoherent_cascade(
    initial: &LevelDistribution,
    schedule: &CrossingSchedule,
    variant: IcaVariant,
    sweep_rate: f64,
) -> Result<LevelDistribution> {
    let mut p = initial.0.clone();
    for e in &schedule.entries {
        let i = e.crossing.lower_level;
        if i + 1 >= p.len() {
            continue;
        }
        let prob = transition_probability(&e.crossing, variant, sweep_rate)?;
        let moved = prob * (p[i + 1] - p[i]);
        p[i] += moved;
        p[i + 1] -= moved;
    }
    Ok(LevelDistribution(p))
}

/// Cascade result for one mixture.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IcaOutcome {
    pub variant: IcaVariant,
    pub half_time: f64,
    pub final_distribution: LevelDistribution,
    pub split: FinalSplit,
}

/// ICA return probability of a mixture after the forward and backward legs.
pub fn ica_return_probability(
    mixture: &Mixture,
    params: &ModelParams,
    protocol: &SweepProtocol,
    schedule: &CrossingSchedule,
    variant: IcaVariant,
) -> Result<IcaOutcome> {
    let energies = eigen_at(params, protocol.delta_initial(), false)?.values;
    ica_with_energies(mixture, &energies, protocol, schedule, variant)
}

fn ica_with_energies(
    mixture: &Mixture,
    energies: &[f64],
    protocol: &SweepProtocol,
    schedule: &CrossingSchedule,
    variant: IcaVariant,
) -> Result<IcaOutcome> {
    let initial = mixture.distribution(energies.len());
    let fin = incoherent_cascade(&initial, schedule, variant, protocol.sweep_rate())?;
    let occ = AdiabaticOccupation {
        probabilities: fin.clone(),
        energies: energies.to_vec(),
        delta: protocol.delta_initial(),
        time: protocol.half_time(),
    };
    Ok(IcaOutcome {
        variant,
        half_time: protocol.half_time(),
        final_distribution: fin,
        split: split_final_distribution(&occ, &initial),
    })
}

/// ICA return probabilities over several half times, reusing one schedule.
pub fn ica_return_scan(
    mixture: &Mixture,
    params: &ModelParams,
    protocol: &SweepProtocol,
    schedule: &CrossingSchedule,
    variant: IcaVariant,
    half_times: &[f64],
) -> Result<Vec<IcaOutcome>> {
    let energies = eigen_at(params, protocol.delta_initial(), false)?.values;
    half_times
        .par_iter()
        .map(|&tt| ica_with_energies(mixture, &energies, &protocol.with_half_time(tt)?, schedule, variant))
        .collect()
}

/// Final forward-leg distributions of the three variants next to a reference.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantComparison {
    pub reference: LevelDistribution,
    pub variants: Vec<VariantResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantResult {
    pub variant: IcaVariant,
    pub distribution: LevelDistribution,
    pub l1_distance: f64,
}

impl VariantComparison {
    pub fn get(&self, variant: IcaVariant) -> Option<&VariantResult> {
        self.variants.iter().find(|v| v.variant == variant)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Forward-leg cascades from `level` against a reference distribution at `delta_turn`
/// (typically exact propagation).
pub fn compare_variants(
    schedule: &CrossingSchedule,
    protocol: &SweepProtocol,
    level: usize,
    reference: &LevelDistribution,
) -> Result<VariantComparison> {
    let fwd = schedule.forward_only();
    let start = LevelDistribution::indicator(reference.len(), level);
    let variants = IcaVariant::ALL
        .iter()
        .map(|&v| {
            let d = incoherent_cascade(&start, &fwd, v, protocol.sweep_rate())?;
            Ok(VariantResult {
                variant: v,
                l1_distance: d.l1_distance(reference),
                distribution: d,
            })
        })
        .collect::<Result<_>>()?;
    Ok(VariantComparison {
        reference: reference.clone(),
        variants,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{DiabaticPair, ReferenceMax};

    fn crossing(lower_level: usize, delta_c: f64, gap: f64) -> AvoidedCrossing {
        AvoidedCrossing {
            lower_level,
            delta_c,
            gap,
            reliable: true,
            reference_max: Some(ReferenceMax { delta_max: delta_c + 1.0, gap_max: 1.0 }),
            slope: 1.0,
            diabatic: DiabaticPair {
                slope_difference: 1.0,
                fock_states: (lower_level, lower_level + 1),
                direct_coupling: 0.5 * gap,
            },
        }
    }

    #[test]
    fn lz_formula() {
        assert_eq!(lz_probability(0.0, 1.0, 1.0).unwrap(), 1.0);
        let p = lz_probability(0.02, 1e-3, 1.0).unwrap();
        assert!((p - (-0.2 * std::f64::consts::PI).exp()).abs() < 1e-15);
        assert!((p - 0.5335).abs() < 1e-4);
        assert_eq!(lz_probability(1e-9, 1.0, 1.0).unwrap(), 1.0);
        assert!(lz_probability(1.0, 0.0, 1.0).is_err());
        assert!(lz_probability(1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn schedule_order_and_window() {
        let cs = [crossing(2, 0.5, 0.1), crossing(0, -1.0, 0.1), crossing(1, 3.0, 0.1), crossing(1, 0.5, 0.1)];
        let proto = SweepProtocol::new(-2.0, 2.0, 10.0).unwrap();
        let s = build_schedule(&cs, &proto);
        let fwd: Vec<(usize, f64)> = s.leg(Leg::Forward).map(|e| (e.crossing.lower_level, e.crossing.delta_c)).collect();
        assert_eq!(fwd, vec![(0, -1.0), (1, 0.5), (2, 0.5)]);
        let mut back: Vec<(usize, f64)> = s.leg(Leg::Backward).map(|e| (e.crossing.lower_level, e.crossing.delta_c)).collect();
        back.reverse();
        assert_eq!(back, fwd);
        let empty = build_schedule(&cs, &SweepProtocol::new(-3.0, -2.0, 1.0).unwrap());
        assert!(empty.is_empty());
    }

    #[test]
    fn cascade_limits() {
        let cs = [crossing(0, -1.0, 0.0), crossing(1, 0.0, 0.0), crossing(2, 1.0, 0.0)];
        let proto = SweepProtocol::new(-2.0, 2.0, 10.0).unwrap();
        let s = build_schedule(&cs, &proto).forward_only();
        // gap 0: every crossing diabatic, the ground state climbs the ladder
        let out = incoherent_cascade(&LevelDistribution::indicator(4, 0), &s, IcaVariant::Improved, 0.4).unwrap();
        assert_eq!(out.0, vec![0.0, 0.0, 0.0, 1.0]);
        // wide gaps: identity
        let wide = [crossing(0, -1.0, 50.0), crossing(1, 0.0, 50.0)];
        let s = build_schedule(&wide, &proto);
        let p0 = LevelDistribution(vec![0.1, 0.2, 0.3, 0.4]);
        let out = incoherent_cascade(&p0, &s, IcaVariant::Modified, 0.4).unwrap();
        assert_eq!(out, p0);
    }

    #[test]
    fn standard_variant_ignores_indirect_pairs() {
        let mut c = crossing(3, 0.0, 0.3);
        c.diabatic.fock_states = (2, 5);
        c.diabatic.direct_coupling = 0.0;
        assert_eq!(transition_probability(&c, IcaVariant::Standard, 0.1).unwrap(), 1.0);
        assert!(transition_probability(&c, IcaVariant::Modified, 0.1).unwrap() < 1.0);
        c.reliable = false;
        assert_eq!(transition_probability(&c, IcaVariant::Improved, 0.1).unwrap(), 1.0);
    }

    #[test]
    fn two_level_variants_coincide() {
        let p = ModelParams::new(1, 0.0).unwrap();
        let spec = crate::spectral::scan_window(&p, -5.0, 5.0, crate::spectral::ScanOptions::new(101)).unwrap();
        let cs = crate::spectral::detect_crossings(&spec).unwrap();
        assert_eq!(cs.len(), 1);
        let proto = SweepProtocol::new(-5.0, 5.0, 100.0).unwrap();
        let s = build_schedule(&cs, &proto).forward_only();
        let want = (-std::f64::consts::PI / (2.0 * proto.sweep_rate())).exp();
        for v in IcaVariant::ALL {
            let d = incoherent_cascade(&LevelDistribution::indicator(2, 0), &s, v, proto.sweep_rate()).unwrap();
            assert!((d.0[1] - want).abs() < 1e-12, "{v:?}: {} vs {want}", d.0[1]);
        }
    }
}
