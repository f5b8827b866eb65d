//! One function per experiment kind. Each computes everything in memory and returns the
//! files to write, so the caller stays the only writer.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, ExperimentKind, Method};
use super::manifest::StageTiming;
use crate::error::Result;
use crate::ica::{build_schedule, compare_variants, ica_return_scan, CrossingSchedule};
use crate::model::{ModelParams, SweepProtocol};
use crate::propagation::{
    project_adiabatic, propagate, propagate_mixture, return_probability_scan, split_final_distribution,
    FinalSplit, LevelDistribution, Mixture, PropagationOptions, QuantumState,
};
use crate::semiclassics::{
    action_of_energy, evolve_ensemble, fixed_points, initial_side, kruskal_return_probability, lobe_areas,
    plot_coordinates, sample_microcanonical, write_area_table, EnsembleOptions, Stability,
};
use crate::spectral::{
    density_of_states, detect_crossings, min_gap, scan_window, tunnelling_splitting, AvoidedCrossing, ScanOptions,
};

/// Mass on the returning cluster above which a run counts as adiabatic.
const ADIABATIC_REGIME_MASS: f64 = 1.0 - 1e-3;

/// Scalar results of one run, used for the scan table.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunSummary {
    pub kind: String,
    pub metrics: BTreeMap<String, f64>,
    pub labels: BTreeMap<String, String>,
    /// Units of work that may fail individually (samples, grid points).
    pub attempted: usize,
    pub failed: usize,
}

impl RunSummary {
    fn new(kind: ExperimentKind) -> Self {
        Self { kind: kind.name().into(), ..Self::default() }
    }

    fn metric(&mut self, key: &str, value: f64) {
        self.metrics.insert(key.into(), value);
    }

    fn label(&mut self, key: &str, value: impl Into<String>) {
        self.labels.insert(key.into(), value.into());
    }

    pub fn failure_rate(&self) -> f64 {
        if self.attempted == 0 {
            0.0
        } else {
            self.failed as f64 / self.attempted as f64
        }
    }

    fn add_split(&mut self, split: &FinalSplit) {
        self.metric("separable", if split.separable { 1.0 } else { 0.0 });
        if let Some(p) = split.return_probability {
            self.metric("return_probability", p);
        }
        if let Some(v) = split.valley {
            self.metric("valley_return_probability", v.return_probability);
        }
        self.metric("residual", split.residual);
        self.metric("mass_at_reference", split.mass_at_reference);
        self.metric("initial_support_mass", split.initial_support_mass);
        self.label("regime", regime(split));
    }
}

/// Qualitative outcome of a full sweep: near-complete return, two separated groups, or
/// a spread-out final distribution.
pub fn regime(split: &FinalSplit) -> &'static str {
    match split.return_probability {
        Some(p) if p >= ADIABATIC_REGIME_MASS => "adiabatic",
        Some(_) => "bimodal",
        None => "irregular",
    }
}

#[derive(Debug, Default)]
pub struct Artifacts {
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: RunSummary,
    pub stages: Vec<StageTiming>,
}

impl Artifacts {
    fn new(kind: ExperimentKind) -> Self {
        Self { summary: RunSummary::new(kind), ..Self::default() }
    }

    fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t0 = Instant::now();
        let out = f();
        self.stages.push(StageTiming { name: name.into(), seconds: t0.elapsed().as_secs_f64() });
        out
    }

    fn file(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.file(name, s.into_bytes());
        Ok(())
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.12e}"))
}

fn mean_std(v: &[f64]) -> Option<(f64, f64)> {
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    Some((m, var.sqrt()))
}

fn scan_options(cfg: &ExperimentConfig) -> ScanOptions {
    let o = ScanOptions::new(cfg.grid_points);
    match cfg.max_pair {
        Some(m) => o.max_pair(m),
        None => o,
    }
}

fn crossing_rows(out: &mut Vec<u8>, crossings: &[AvoidedCrossing]) -> Result<()> {
    writeln!(out, "lower_level,delta_c,gap,reliable,slope,diabatic_slope,fock_low,fock_high,direct_coupling")?;
    for c in crossings {
        writeln!(
            out,
            "{},{:.12e},{:.12e},{},{:.12e},{:.12e},{},{},{:.12e}",
            c.lower_level,
            c.delta_c,
            c.gap,
            c.reliable,
            c.slope,
            c.diabatic.slope_difference,
            c.diabatic.fock_states.0,
            c.diabatic.fock_states.1,
            c.diabatic.direct_coupling
        )?;
    }
    Ok(())
}

fn schedule_for(cfg: &ExperimentConfig, params: &ModelParams, protocol: &SweepProtocol, a: &mut Artifacts) -> Result<CrossingSchedule> {
    let spectrum = a.stage("spectrum", || {
        scan_window(params, protocol.delta_initial(), protocol.delta_turn(), scan_options(cfg))
    })?;
    let crossings = a.stage("crossings", || detect_crossings(&spectrum))?;
    Ok(build_schedule(&crossings, protocol))
}

fn propagation_options(cfg: &ExperimentConfig) -> PropagationOptions {
    PropagationOptions::default().with_tolerance(cfg.tolerance)
}

pub fn execute(cfg: &ExperimentConfig) -> Result<Artifacts> {
    use ExperimentKind::*;
    match cfg.kind {
        SpectrumScan => spectrum_scan(cfg),
        GapVsN => gap_vs_n(cfg),
        Dos => dos(cfg),
        SweepMap => sweep_map(cfg),
        FinalSplit => final_split(cfg),
        ReturnScan => return_scan(cfg),
        IcaCompare => ica_compare(cfg),
        ClassicalEnsemble => classical_ensemble(cfg),
        Correspondence => correspondence(cfg),
    }
}

fn spectrum_scan(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let mut a = Artifacts::new(cfg.kind);
    let p = cfg.params()?;
    let (lo, hi) = (cfg.delta_initial.unwrap(), cfg.delta_turn.unwrap());
    let spectrum = a.stage("spectrum", || scan_window(&p, lo, hi, scan_options(cfg)))?;
    let crossings = a.stage("crossings", || detect_crossings(&spectrum))?;

    let mut buf = Vec::new();
    spectrum.write_levels_csv(&mut buf)?;
    a.file("levels.csv", buf);
    let mut buf = Vec::new();
    spectrum.write_separations_csv(&mut buf)?;
    a.file("separations.csv", buf);
    let mut buf = Vec::new();
    crossing_rows(&mut buf, &crossings)?;
    a.file("crossings.csv", buf);

    // classical stationary energies on the quantum energy scale
    let offset = p.quantum_energy_offset();
    let mut buf = Vec::new();
    writeln!(buf, "delta,imbalance,energy,stability")?;
    for &d in &spectrum.delta_grid {
        for f in fixed_points(d, &p) {
            let kind = match f.stability {
                Stability::Minimum => "minimum",
                Stability::Maximum => "maximum",
                Stability::Saddle => "saddle",
            };
            writeln!(buf, "{d:.12e},{:.12e},{:.12e},{kind}", f.state.p, f.energy + offset)?;
        }
    }
    a.file("fixed_points.csv", buf);

    let s = &mut a.summary;
    s.metric("crossings", crossings.len() as f64);
    s.metric("unreliable_crossings", crossings.iter().filter(|c| !c.reliable).count() as f64);
    if let Some(m) = spectrum.min_gap() {
        s.metric("min_gap", m.gap);
        s.metric("min_gap_delta", m.delta);
        s.metric("min_gap_lower_level", m.lower_level as f64);
    }
    s.metric("gap_floor", spectrum.gap_floor);
    a.json("summary.json", &a.summary.clone())?;
    Ok(a)
}

fn gap_vs_n(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let mut a = Artifacts::new(cfg.kind);
    let (lo, hi) = (cfg.delta_initial.unwrap(), cfg.delta_turn.unwrap());
    let points: Vec<(f64, usize)> = cfg.u_values.iter().flat_map(|&u| cfg.n_values.iter().map(move |&n| (u, n))).collect();
    let rows: Vec<std::result::Result<(crate::spectral::MinGap, Option<f64>), String>> = a.stage("gaps", || {
        Ok(points
            .par_iter()
            .map(|&(u, n)| {
                let p = ModelParams::with_omega(n, cfg.omega, u).map_err(|e| e.to_string())?;
                let g = min_gap(&p, lo, hi, cfg.grid_points).map_err(|e| e.to_string())?;
                let doublet = if u < -1.0 { Some(tunnelling_splitting(&p, 0).map_err(|e| e.to_string())?.abs()) } else { None };
                Ok((g, doublet))
            })
            .collect())
    })?;
    let mut buf = Vec::new();
    writeln!(buf, "interaction_u,n_particles,min_gap,lower_level,delta,reliable,ground_doublet_splitting,status")?;
    for (&(u, n), r) in points.iter().zip(&rows) {
        match r {
            Ok((g, d)) => writeln!(
                buf,
                "{u:.12e},{n},{:.12e},{},{:.12e},{},{},ok",
                g.gap,
                g.lower_level,
                g.delta,
                g.reliable,
                opt(*d)
            )?,
            Err(e) => writeln!(buf, "{u:.12e},{n},,,,,,\"{}\"", e.replace('"', "'"))?,
        }
    }
    a.file("gaps.csv", buf);
    a.summary.attempted = points.len();
    a.summary.failed = rows.iter().filter(|r| r.is_err()).count();
    a.json("summary.json", &a.summary.clone())?;
    Ok(a)
}

fn dos(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let mut a = Artifacts::new(cfg.kind);
    let p = cfg.params()?;
    let delta = cfg.delta_initial.unwrap();
    let h = a.stage("histogram", || density_of_states(&p, delta, cfg.energy_bins))?;
    let mut buf = Vec::new();
    writeln!(buf, "energy_lo,energy_hi,count")?;
    for (k, c) in h.counts.iter().enumerate() {
        writeln!(buf, "{:.12e},{:.12e},{c}", h.edges[k], h.edges[k + 1])?;
    }
    a.file("dos.csv", buf);
    let k = h.peak_bin();
    a.summary.metric("peak_energy", 0.5 * (h.edges[k] + h.edges[k + 1]));
    let side = initial_side(&p, delta);
    if let Some(u) = lobe_areas(delta, &p, side).unstable_point {
        a.summary.metric("separatrix_energy", u.energy + p.quantum_energy_offset());
    }
    a.json("summary.json", &a.summary.clone())?;
    Ok(a)
}

fn distribution_rows(buf: &mut Vec<u8>, energies: &[f64], initial: &LevelDistribution, fin: &LevelDistribution) -> Result<()> {
    writeln!(buf, "level,energy,initial,final")?;
    for (k, e) in energies.iter().enumerate() {
        writeln!(buf, "{k},{e:.12e},{:.12e},{:.12e}", initial.0[k], fin.0[k])?;
    }
    Ok(())
}

fn sweep_map(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let mut a = Artifacts::new(cfg.kind);
    let p = cfg.params()?;
    let proto = cfg.protocol()?;
    let level = cfg.level.unwrap();
    let start = QuantumState::eigenstate(&p, &proto, level)?;
    let opts = propagation_options(cfg).with_snapshots(cfg.snapshots);
    let tr = a.stage("propagate", || propagate(&start, &p, &proto, &opts))?;
    let maps = a.stage("project", || {
        tr.snapshots.par_iter().map(|s| project_adiabatic(s, &p)).collect::<Result<Vec<_>>>()
    })?;
    let mut buf = Vec::new();
    writeln!(buf, "time,delta,level,energy,probability")?;
    for occ in &maps {
        for (k, (e, w)) in occ.energies.iter().zip(&occ.probabilities.0).enumerate() {
            writeln!(buf, "{:.12e},{:.12e},{k},{e:.12e},{w:.12e}", occ.time, occ.delta)?;
        }
    }
    a.file("occupation_map.csv", buf);

    let fin = project_adiabatic(&tr.final_state, &p)?;
    let initial = LevelDistribution::indicator(p.dim(), level);
    let split = split_final_distribution(&fin, &initial);
    let mut buf = Vec::new();
    distribution_rows(&mut buf, &fin.energies, &initial, &fin.probabilities)?;
    a.file("final_distribution.csv", buf);
    a.json("split.json", &split)?;
    a.summary.add_split(&split);
    a.summary.metric("norm_drift", tr.stats.norm_drift);
    a.summary.metric("steps", tr.stats.steps as f64);
    a.json("summary.json", &a.summary.clone())?;
    Ok(a)
}

fn final_split(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let mut a = Artifacts::new(cfg.kind);
    let p = cfg.params()?;
    let proto = cfg.protocol()?;
    let mix = Mixture::centred(&p, proto.delta_initial(), cfg.level.unwrap(), cfg.mixture_size)?;
    let outcome = a.stage("propagate", || propagate_mixture(&mix, &p, &proto, &propagation_options(cfg)))?;
    let initial = mix.distribution(p.dim());
    let split = split_final_distribution(&outcome.occupation, &initial);
    let mut buf = Vec::new();
    distribution_rows(&mut buf, &outcome.occupation.energies, &initial, &outcome.occupation.probabilities)?;
    a.file("final_distribution.csv", buf);
    a.json("split.json", &split)?;
    a.summary.add_split(&split);
    let drift = outcome.stats.iter().map(|s| s.norm_drift).fold(0.0, f64::max);
    a.summary.metric("norm_drift", drift);
    a.json("summary.json", &a.summary.clone())?;
    Ok(a)
}

fn return_scan(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let mut a = Artifacts::new(cfg.kind);
    let p = cfg.params()?;
    let proto = cfg.protocol()?;
    let mix = Mixture::centred(&p, proto.delta_initial(), cfg.level.unwrap(), cfg.mixture_size)?;
    // (half_time, split, norm drift)
    let rows: Vec<(f64, FinalSplit, Option<f64>)> = match cfg.method {
        Method::Exact => a
            .stage("propagate", || return_probability_scan(&mix, &p, &proto, &cfg.half_times, &propagation_options(cfg)))?
            .into_iter()
            .map(|r| (r.half_time, r.split, Some(r.max_norm_drift)))
            .collect(),
        Method::Ica => {
            let schedule = schedule_for(cfg, &p, &proto, &mut a)?;
            a.stage("cascade", || ica_return_scan(&mix, &p, &proto, &schedule, cfg.variant, &cfg.half_times))?
                .into_iter()
                .map(|o| (o.half_time, o.split, None))
                .collect()
        }
    };
    let mut buf = Vec::new();
    writeln!(buf, "half_time,return_probability,separable,valley_level,residual,mass_at_reference,initial_support_mass,norm_drift")?;
    for (tt, s, drift) in &rows {
        writeln!(
            buf,
            "{tt:.12e},{},{},{},{:.12e},{:.12e},{:.12e},{}",
            opt(s.peak_return_probability()),
            s.separable,
            s.valley.map_or(String::new(), |v| v.level.to_string()),
            s.residual,
            s.mass_at_reference,
            s.initial_support_mass,
            opt(*drift)
        )?;
    }
    a.file("return_scan.csv", buf);
    let s = &mut a.summary;
    let ret: Vec<f64> = rows.iter().filter_map(|r| r.1.peak_return_probability()).collect();
    if let Some((m, sd)) = mean_std(&ret) {
        s.metric("return_probability_mean", m);
        s.metric("return_probability_std", sd);
    }
    let at_ref: Vec<f64> = rows.iter().map(|r| r.1.mass_at_reference).collect();
    if let Some((m, sd)) = mean_std(&at_ref) {
        s.metric("mass_at_reference_mean", m);
        s.metric("mass_at_reference_std", sd);
    }
    s.metric("separable_fraction", rows.iter().filter(|r| r.1.separable).count() as f64 / rows.len() as f64);
    if rows.len() == 1 {
        s.add_split(&rows[0].1);
    }
    a.json("summary.json", &a.summary.clone())?;
    Ok(a)
}

fn ica_compare(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let mut a = Artifacts::new(cfg.kind);
    let p = cfg.params()?;
    let proto = cfg.protocol()?;
    let level = cfg.level.unwrap();
    let schedule = schedule_for(cfg, &p, &proto, &mut a)?;
    let start = QuantumState::eigenstate(&p, &proto, level)?;
    let tr = a.stage("propagate", || propagate(&start, &p, &proto, &propagation_options(cfg).forward_only()))?;
    let exact = project_adiabatic(&tr.final_state, &p)?;
    let cmp = compare_variants(&schedule, &proto, level, &exact.probabilities)?;

    let mut buf = Vec::new();
    schedule.forward_only().write_csv(&mut buf, cfg.variant, proto.sweep_rate())?;
    a.file("schedule.csv", buf);
    let mut buf = Vec::new();
    writeln!(buf, "level,energy,exact,standard,modified,improved")?;
    for (k, e) in exact.energies.iter().enumerate() {
        write!(buf, "{k},{e:.12e},{:.12e}", cmp.reference.0[k])?;
        for v in &cmp.variants {
            write!(buf, ",{:.12e}", v.distribution.0[k])?;
        }
        writeln!(buf)?;
    }
    a.file("distributions.csv", buf);
    a.file("comparison.json", (cmp.to_json()? + "\n").into_bytes());
    for v in &cmp.variants {
        a.summary.metric(&format!("l1_{}", v.variant.name()), v.l1_distance);
    }
    a.summary.metric("norm_drift", tr.stats.norm_drift);
    a.json("summary.json", &a.summary.clone())?;
    Ok(a)
}

fn classical_ensemble(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let mut a = Artifacts::new(cfg.kind);
    let p = cfg.params()?;
    let proto = cfg.protocol()?;
    let samples = cfg.samples.unwrap();
    let side = initial_side(&p, proto.delta_initial());
    let energy = cfg.classical_energy.unwrap() * p.p0();
    let ens = a.stage("sample", || sample_microcanonical(energy, proto.delta_initial(), &p, side, samples, cfg.seed))?;
    let opts = EnsembleOptions { dt: cfg.ensemble_dt, ..EnsembleOptions::default() };
    let out = a.stage("evolve", || evolve_ensemble(&ens, &p, &proto, &opts))?;
    let kruskal = a.stage("kruskal", || Ok(kruskal_return_probability(ens.action, &p, &proto)))?;

    let mut buf = Vec::new();
    ens.write_csv(&mut buf, &p)?;
    a.file("initial_ensemble.csv", buf);
    let mut buf = Vec::new();
    writeln!(buf, "index,q,p,q_plot,p_plot,energy,returned")?;
    let mut ok = 0;
    for (k, s) in out.final_states.iter().enumerate() {
        match s {
            Some(s) => {
                let (qp, pp) = plot_coordinates(s, &p);
                writeln!(
                    buf,
                    "{k},{:.12e},{:.12e},{qp:.12e},{pp:.12e},{:.12e},{}",
                    s.q, s.p, out.final_energies[ok], out.returned[ok]
                )?;
                ok += 1;
            }
            None => writeln!(buf, "{k},,,,,,")?,
        }
    }
    a.file("final_ensemble.csv", buf);
    let deltas: Vec<f64> = (0..cfg.grid_points)
        .map(|g| proto.delta_initial() + (proto.delta_turn() - proto.delta_initial()) * g as f64 / (cfg.grid_points - 1) as f64)
        .collect();
    let mut buf = Vec::new();
    write_area_table(&mut buf, &p, side, &deltas)?;
    a.file("area_table.csv", buf);

    let s = &mut a.summary;
    s.attempted = samples;
    s.failed = out.failed;
    s.metric("return_probability", out.return_probability);
    s.metric("action", ens.action);
    s.metric("action_fraction", ens.action / (4.0 * std::f64::consts::PI * p.p0()));
    s.metric("period", ens.period);
    if let Some(c) = out.clusters {
        s.metric("low_centroid", c.low_centroid);
        s.metric("high_centroid", c.high_centroid);
    }
    match &kruskal {
        Ok(k) => {
            s.metric("kruskal_return_probability", k.return_probability);
            if let Some(d) = k.delta_s {
                s.metric("delta_s", d);
            }
        }
        Err(e) => s.label("kruskal_error", e.to_string()),
    }
    if let Ok(k) = &kruskal {
        a.json("kruskal.json", k)?;
    }
    a.json("summary.json", &a.summary.clone())?;
    Ok(a)
}

fn correspondence(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let mut a = Artifacts::new(cfg.kind);
    let p = cfg.params()?;
    let proto = cfg.protocol()?;
    let schedule = schedule_for(cfg, &p, &proto, &mut a)?;
    let side = initial_side(&p, proto.delta_initial());
    let offset = p.quantum_energy_offset();
    let sphere = 4.0 * std::f64::consts::PI * p.p0();

    let mut buf = Vec::new();
    writeln!(
        buf,
        "level,mean_energy,classical_energy,action_fraction,delta_s,kruskal_return_probability,half_time,ica_return_probability,separable"
    )?;
    for &level in &cfg.levels {
        let mix = Mixture::centred(&p, proto.delta_initial(), level, cfg.mixture_size)?;
        let ica = a.stage("cascade", || ica_return_scan(&mix, &p, &proto, &schedule, cfg.variant, &cfg.half_times))?;
        let e_cl = mix.mean_energy - offset;
        let kruskal = action_of_energy(e_cl, proto.delta_initial(), &p, side)
            .and_then(|action| Ok((action, kruskal_return_probability(action, &p, &proto)?)));
        let (frac, ds, pk) = match &kruskal {
            Ok((action, k)) => (Some(action / sphere), k.delta_s, Some(k.return_probability)),
            Err(_) => (None, None, None),
        };
        for o in &ica {
            writeln!(
                buf,
                "{level},{:.12e},{:.12e},{},{},{},{:.12e},{},{}",
                mix.mean_energy,
                e_cl,
                opt(frac),
                opt(ds),
                opt(pk),
                o.half_time,
                opt(o.split.peak_return_probability()),
                o.split.separable
            )?;
        }
        let ret: Vec<f64> = ica.iter().filter_map(|o| o.split.peak_return_probability()).collect();
        let s = &mut a.summary;
        if let Some((m, _)) = mean_std(&ret) {
            let spread = ret.iter().cloned().fold(f64::MIN, f64::max) - ret.iter().cloned().fold(f64::MAX, f64::min);
            s.metric(&format!("ica_mean_level_{level}"), m);
            s.metric(&format!("ica_spread_level_{level}"), spread);
        }
        match kruskal {
            Ok(_) => s.metric(&format!("kruskal_level_{level}"), pk.unwrap()),
            Err(e) => s.label(&format!("kruskal_error_level_{level}"), e.to_string()),
        }
    }
    a.file("correspondence.csv", buf);
    a.json("summary.json", &a.summary.clone())?;
    Ok(a)
}
