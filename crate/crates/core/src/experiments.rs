//! Experiment harnesses: universality sweep, perturbation table,
//! recalibration, phase-difference study and faulty-shifter grid.
//!
//! Every harness splits its work into independent units (usually one per
//! target), runs them through rayon and returns records in a canonical order
//! keyed by the unit id, so thread count and completion order never change
//! the output. Units listed in [`RunContext::skip`] are not recomputed, which is
//! how `--resume` is implemented.

use std::collections::HashSet;
use std::f64::consts::{PI, TAU};
use std::time::Instant;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{canonical_phase, compose, loss, Fault, InterlacedCircuit, PhaseProgram};
use crate::error::{Error, Result};
use crate::lattice::{dfrft, perturbed_mixer_seeded, perturbed_mixer_set, relative_deviation, JxSpec, MixingLayer};
use crate::numerics::ComplexMatrix;
use crate::optimizer::{fit, recalibrate, InitStrategy, LmaOptions, TRUNCATED_MAX_ITERATIONS};
use crate::sampling::{haar_unitary, rng_from_seed, uniform_phases, HermitianEnsemble, SeedPlan};

/// Loss below which a fit counts as exact.
pub const NOISE_FLOOR: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    Universality,
    Table1,
    Recalibration,
    PhaseDiff,
    Faulty,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::Universality,
        ExperimentKind::Table1,
        ExperimentKind::Recalibration,
        ExperimentKind::PhaseDiff,
        ExperimentKind::Faulty,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Universality => "universality",
            ExperimentKind::Table1 => "table1",
            ExperimentKind::Recalibration => "recalibration",
            ExperimentKind::PhaseDiff => "phasediff",
            ExperimentKind::Faulty => "faulty",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

/// One row of an experiment's output. Fields that do not apply to an
/// experiment are left empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub experiment: String,
    /// Resume key of the unit of work that produced this row.
    pub unit: String,
    pub n: usize,
    pub m: usize,
    pub sigma_k: Option<f64>,
    /// `layer:port@value` entries separated by `;` (zero-based indices).
    pub fault_plan: String,
    pub fault_count: usize,
    pub free_count: usize,
    pub max_faults_per_layer: usize,
    pub target_index: usize,
    pub run_index: usize,
    pub init_mode: String,
    pub seed: u64,
    /// Loss of the ideal-mixer fit that produced the uncorrected phases.
    pub reference_loss: Option<f64>,
    pub loss_before: Option<f64>,
    pub loss_after: Option<f64>,
    pub delta_f: Option<f64>,
    pub delta_u: Option<f64>,
    pub mu_dx: Option<f64>,
    pub sigma_dx: Option<f64>,
    pub iterations: usize,
    pub restarts_used: usize,
    pub converged: bool,
    /// Space separated reference phases (phase-difference study only).
    pub reference_phases: String,
    /// Space separated recovered phases in `[0, 2π)` (phase-difference
    /// study only).
    pub phases: String,
    /// Wall time of the unit; the only field that differs between reruns.
    pub wall_time_s: f64,
}

impl ExperimentRecord {
    fn new(kind: ExperimentKind, unit: &str, n: usize, m: usize) -> Self {
        Self {
            experiment: kind.name().to_string(),
            unit: unit.to_string(),
            n,
            m,
            sigma_k: None,
            fault_plan: String::new(),
            fault_count: 0,
            free_count: n * m,
            max_faults_per_layer: 0,
            target_index: 0,
            run_index: 0,
            init_mode: String::new(),
            seed: 0,
            reference_loss: None,
            loss_before: None,
            loss_after: None,
            delta_f: None,
            delta_u: None,
            mu_dx: None,
            sigma_dx: None,
            iterations: 0,
            restarts_used: 0,
            converged: false,
            reference_phases: String::new(),
            phases: String::new(),
            wall_time_s: 0.0,
        }
    }

    /// Copy with the wall time cleared, for rerun comparisons.
    pub fn without_timing(&self) -> Self {
        Self { wall_time_s: 0.0, ..self.clone() }
    }
}

fn join_phases(x: &[f64]) -> String {
    x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn parse_phases(s: &str) -> Result<Vec<f64>> {
    s.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| Error::InvalidArgument(format!("bad phase '{t}': {e}"))))
        .collect()
}

pub fn format_fault_plan(faults: &[Fault]) -> String {
    faults
        .iter()
        .map(|f| format!("{}:{}@{}", f.layer, f.port, f.value))
        .collect::<Vec<_>>()
        .join(";")
}

pub fn parse_fault_plan(s: &str) -> Result<Vec<Fault>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(';')
        .map(|entry| {
            let bad = || Error::InvalidArgument(format!("bad fault entry '{entry}'"));
            let (pos, value) = entry.split_once('@').ok_or_else(bad)?;
            let (layer, port) = pos.split_once(':').ok_or_else(bad)?;
            Ok(Fault {
                layer: layer.trim().parse().map_err(|_| bad())?,
                port: port.trim().parse().map_err(|_| bad())?,
                value: value.trim().parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

fn ideal_mixers(spec: &JxSpec, layers: usize) -> Result<Vec<MixingLayer>> {
    Ok(vec![dfrft(spec)?; layers + 1])
}

/// Resume set and per-unit sink shared by every harness.
/// Called with the records of each finished unit.
pub type UnitSink<'a> = &'a (dyn Fn(&[ExperimentRecord]) + Sync);

#[derive(Default)]
pub struct RunContext<'a> {
    /// Unit keys whose records already exist; these units are not rerun.
    pub skip: HashSet<String>,
    /// Called once per finished unit with that unit's records, from worker
    /// threads, in completion order.
    pub on_unit: Option<UnitSink<'a>>,
}

impl RunContext<'_> {
    pub fn skipping(skip: HashSet<String>) -> Self {
        Self { skip, on_unit: None }
    }
}

fn run_units<U, F>(units: Vec<U>, ctx: &RunContext, key: impl Fn(&U) -> String, work: F) -> Result<Vec<ExperimentRecord>>
where
    U: Send + Sync,
    F: Fn(&U, &str) -> Result<Vec<ExperimentRecord>> + Send + Sync,
{
    let pending: Vec<(String, &U)> = units
        .iter()
        .map(|u| (key(u), u))
        .filter(|(k, _)| !ctx.skip.contains(k))
        .collect();
    let batches: Vec<Result<Vec<ExperimentRecord>>> = pending
        .par_iter()
        .map(|(k, u)| {
            let t0 = Instant::now();
            let mut recs = work(u, k)?;
            let dt = t0.elapsed().as_secs_f64();
            for r in &mut recs {
                r.wall_time_s = dt;
            }
            if let Some(sink) = ctx.on_unit {
                sink(&recs);
            }
            Ok(recs)
        })
        .collect();
    let mut out = Vec::new();
    for b in batches {
        out.extend(b?);
    }
    Ok(out)
}

/// Stable sort by unit key, keeping the within-unit order.
pub fn canonicalize(records: &mut [ExperimentRecord]) {
    records.sort_by(|a, b| a.unit.cmp(&b.unit));
}

fn default_seed() -> u64 {
    2024
}

// ---------------------------------------------------------------------------
// Universality sweep

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UniversalityConfig {
    pub n_values: Vec<usize>,
    /// Layer counts are `N + offset` for each offset.
    pub m_offsets: Vec<i64>,
    pub targets: usize,
    pub restarts: usize,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for UniversalityConfig {
    fn default() -> Self {
        Self {
            n_values: vec![4],
            m_offsets: vec![-1, 0, 1, 2],
            targets: 100,
            restarts: 100,
            max_iterations: LmaOptions::default().max_iterations,
            seed: default_seed(),
        }
    }
}

impl UniversalityConfig {
    pub fn layer_counts(&self, n: usize) -> Vec<usize> {
        self.m_offsets
            .iter()
            .filter_map(|&o| usize::try_from(n as i64 + o).ok().filter(|&m| m >= 1))
            .collect()
    }
}

pub fn universality_sweep(cfg: &UniversalityConfig, ctx: &RunContext) -> Result<Vec<ExperimentRecord>> {
    let plan = SeedPlan::new(cfg.seed);
    let opts = LmaOptions {
        restarts: cfg.restarts,
        max_iterations: cfg.max_iterations,
        ..LmaOptions::default()
    };
    opts.validate()?;
    let mut units = Vec::new();
    for &n in &cfg.n_values {
        for m in cfg.layer_counts(n) {
            for t in 0..cfg.targets {
                units.push((n, m, t));
            }
        }
    }
    run_units(
        units,
        ctx,
        |&(n, m, t)| format!("n{n:03}/m{m:03}/t{t:05}"),
        |&(n, m, t), key| {
            let spec = JxSpec::canonical(n)?;
            let target = haar_unitary(n, plan.task_seed(&format!("target/n{n}"), t as u64));
            let circuit = InterlacedCircuit::ideal(&spec, m)?;
            let seed = plan.task_seed(&format!("fit/n{n}/m{m}"), t as u64);
            let res = fit(&circuit, &target, &opts, &InitStrategy::RandomUniform, seed)?;
            let mut r = ExperimentRecord::new(ExperimentKind::Universality, key, n, m);
            r.target_index = t;
            r.init_mode = "random".into();
            r.seed = seed;
            r.loss_after = Some(res.loss);
            r.iterations = res.total_iterations;
            r.restarts_used = res.restarts_used;
            r.converged = res.converged;
            Ok(vec![r])
        },
    )
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UniversalityRow {
    pub n: usize,
    pub m: usize,
    pub targets: usize,
    pub converged_fraction: f64,
    pub min_loss: f64,
    pub median_loss: f64,
    pub max_loss: f64,
}

pub fn universality_summary(records: &[ExperimentRecord]) -> Vec<UniversalityRow> {
    let mut keys: Vec<(usize, usize)> = records.iter().map(|r| (r.n, r.m)).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.into_iter()
        .map(|(n, m)| {
            let losses: Vec<f64> = records
                .iter()
                .filter(|r| r.n == n && r.m == m)
                .filter_map(|r| r.loss_after)
                .collect();
            UniversalityRow {
                n,
                m,
                targets: losses.len(),
                converged_fraction: fraction(&losses, |l| l < NOISE_FLOOR),
                min_loss: losses.iter().copied().fold(f64::INFINITY, f64::min),
                median_loss: median(&losses),
                max_loss: losses.iter().copied().fold(0.0, f64::max),
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Perturbation table and recalibration

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecalibrationInit {
    /// Fresh uniform phases for every attempt.
    #[default]
    Random,
    /// Start from the uncorrected phases, jittered by `recal_jitter`.
    Uncorrected,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationConfig {
    pub n: usize,
    /// Phase layers; `0` means `N + 1`.
    pub m: usize,
    pub sigma_k_values: Vec<f64>,
    /// Targets (samples) per σ_k row.
    pub targets: usize,
    /// Restart budget of the ideal-mixer fit.
    pub restarts: usize,
    pub ensemble: HermitianEnsemble,
    /// Recalibration attempts per target.
    pub attempts: usize,
    pub recal_max_iterations: usize,
    pub recal_init: RecalibrationInit,
    pub recal_jitter: f64,
    pub seed: u64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            n: 8,
            m: 0,
            sigma_k_values: vec![0.001, 0.003, 0.006],
            targets: 100,
            restarts: 20,
            ensemble: HermitianEnsemble::default(),
            attempts: 10,
            recal_max_iterations: TRUNCATED_MAX_ITERATIONS,
            recal_init: RecalibrationInit::default(),
            recal_jitter: 0.0,
            seed: default_seed(),
        }
    }
}

impl PerturbationConfig {
    pub fn layers(&self) -> usize {
        if self.m == 0 {
            self.n + 1
        } else {
            self.m
        }
    }
}

struct IdealFit {
    target: ComplexMatrix,
    program: PhaseProgram,
    loss: f64,
}

fn ideal_fit(cfg: &PerturbationConfig, plan: &SeedPlan, t: usize) -> Result<IdealFit> {
    let (n, m) = (cfg.n, cfg.layers());
    let spec = JxSpec::canonical(n)?;
    let target = haar_unitary(n, plan.task_seed("target", t as u64));
    let opts = LmaOptions {
        restarts: cfg.restarts,
        ..LmaOptions::default()
    };
    let res = fit(
        &InterlacedCircuit::ideal(&spec, m)?,
        &target,
        &opts,
        &InitStrategy::RandomUniform,
        plan.task_seed("ideal-fit", t as u64),
    )?;
    Ok(IdealFit { target, program: res.phases, loss: res.loss })
}

fn perturbation_units(cfg: &PerturbationConfig, ctx: &RunContext, recalibrate_phases: bool) -> Result<Vec<ExperimentRecord>> {
    let kind = if recalibrate_phases { ExperimentKind::Recalibration } else { ExperimentKind::Table1 };
    let plan = SeedPlan::new(cfg.seed);
    let (n, m) = (cfg.n, cfg.layers());
    let recal_opts = LmaOptions {
        max_iterations: cfg.recal_max_iterations,
        ..LmaOptions::default()
    };
    recal_opts.validate()?;
    if cfg.sigma_k_values.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::InvalidArgument("sigma_k values must be >= 0".into()));
    }
    run_units(
        (0..cfg.targets).collect(),
        ctx,
        |t| format!("t{t:05}"),
        |&t, key| {
            let spec = JxSpec::canonical(n)?;
            let ideal = ideal_fit(cfg, &plan, t)?;
            let f = dfrft(&spec)?;
            let mut out = Vec::with_capacity(cfg.sigma_k_values.len());
            for (si, &sigma_k) in cfg.sigma_k_values.iter().enumerate() {
                let mixers = perturbed_mixer_set(&spec, m + 1, sigma_k, cfg.ensemble, plan.task_seed("mixers", (si * cfg.targets + t) as u64))?;
                let delta_f = mixers
                    .iter()
                    .map(|mx| relative_deviation(f.matrix(), mx.matrix()))
                    .sum::<Result<f64>>()?
                    / mixers.len() as f64;
                let perturbed = InterlacedCircuit::new(mixers, ideal.program.clone())?;
                let u_p = compose(&perturbed);
                let mut r = ExperimentRecord::new(kind, key, n, m);
                r.target_index = t;
                r.run_index = si;
                r.sigma_k = Some(sigma_k);
                r.reference_loss = Some(ideal.loss);
                r.delta_f = Some(delta_f);
                r.delta_u = Some(relative_deviation(&ideal.target, &u_p)?);
                r.loss_before = Some(loss(&u_p, &ideal.target)?);
                if recalibrate_phases {
                    let init = match cfg.recal_init {
                        RecalibrationInit::Random => InitStrategy::RandomUniform,
                        RecalibrationInit::Uncorrected => InitStrategy::FromVector {
                            x: ideal.program.as_vector().to_vec(),
                            jitter: cfg.recal_jitter,
                        },
                    };
                    let seed = plan.task_seed(&format!("recal/s{si}"), t as u64);
                    let res = recalibrate(&perturbed, &ideal.target, &recal_opts, cfg.attempts, &init, seed)?;
                    r.init_mode = match cfg.recal_init {
                        RecalibrationInit::Random => "random".into(),
                        RecalibrationInit::Uncorrected => format!("uncorrected±{}", cfg.recal_jitter),
                    };
                    r.seed = seed;
                    r.loss_after = Some(res.loss);
                    r.iterations = res.total_iterations;
                    r.restarts_used = res.restarts_used;
                    r.converged = res.converged;
                }
                out.push(r);
            }
            Ok(out)
        },
    )
}

/// Relative mixer and end-to-end deviations with uncorrected phases.
pub fn perturbation_table(cfg: &PerturbationConfig, ctx: &RunContext) -> Result<Vec<ExperimentRecord>> {
    perturbation_units(cfg, ctx, false)
}

/// Loss before and after a truncated second optimization on perturbed mixers.
pub fn recalibration_histogram(cfg: &PerturbationConfig, ctx: &RunContext) -> Result<Vec<ExperimentRecord>> {
    perturbation_units(cfg, ctx, true)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerturbationRow {
    pub sigma_k: f64,
    pub samples: usize,
    pub mean_delta_f: f64,
    pub mean_delta_u: f64,
    pub ratio: f64,
    /// Fraction of `loss_after` below the noise floor (recalibration only).
    pub after_below_floor: Option<f64>,
    /// Fraction of `loss_before` above `1e-5`.
    pub before_above_1e5: f64,
    pub max_loss_after: Option<f64>,
}

pub fn perturbation_summary(records: &[ExperimentRecord]) -> Vec<PerturbationRow> {
    let mut sigmas: Vec<f64> = records.iter().filter_map(|r| r.sigma_k).collect();
    sigmas.sort_by(f64::total_cmp);
    sigmas.dedup();
    sigmas
        .into_iter()
        .map(|s| {
            let rows: Vec<&ExperimentRecord> = records.iter().filter(|r| r.sigma_k == Some(s)).collect();
            let df: Vec<f64> = rows.iter().filter_map(|r| r.delta_f).collect();
            let du: Vec<f64> = rows.iter().filter_map(|r| r.delta_u).collect();
            let before: Vec<f64> = rows.iter().filter_map(|r| r.loss_before).collect();
            let after: Vec<f64> = rows.iter().filter_map(|r| r.loss_after).collect();
            let (mean_delta_f, mean_delta_u) = (mean(&df), mean(&du));
            PerturbationRow {
                sigma_k: s,
                samples: rows.len(),
                mean_delta_f,
                mean_delta_u,
                ratio: mean_delta_u / mean_delta_f,
                after_below_floor: (!after.is_empty()).then(|| fraction(&after, |l| l < NOISE_FLOOR)),
                before_above_1e5: fraction(&before, |l| l > 1e-5),
                max_loss_after: (!after.is_empty()).then(|| after.iter().copied().fold(0.0, f64::max)),
            }
        })
        .collect()
}

/// Mean single-mixer deviation `ΔF` at `sigma_k` over `draws` perturbations.
pub fn mean_delta_f(spec: &JxSpec, sigma_k: f64, ensemble: HermitianEnsemble, draws: usize, seed: u64) -> Result<f64> {
    let f = dfrft(spec)?;
    let plan = SeedPlan::new(seed);
    let mut acc = 0.0;
    for i in 0..draws {
        let fp = perturbed_mixer_seeded(spec, sigma_k, ensemble, plan.task_seed("delta-f", i as u64))?;
        acc += relative_deviation(f.matrix(), fp.matrix())?;
    }
    Ok(acc / draws as f64)
}

/// `σ_k` that produces a mean `ΔF` of `delta_f`, using linearity of `ΔF` in
/// `σ_k` for small perturbations.
pub fn sigma_k_for_delta_f(spec: &JxSpec, delta_f: f64, ensemble: HermitianEnsemble, draws: usize, seed: u64) -> Result<f64> {
    if delta_f == 0.0 {
        return Ok(0.0);
    }
    let probe = 1e-3;
    Ok(probe * delta_f / mean_delta_f(spec, probe, ensemble, draws, seed)?)
}

// ---------------------------------------------------------------------------
// Phase-difference study

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseDiffConfig {
    pub n: usize,
    /// Phase layers; `0` means `N + 1`.
    pub m: usize,
    /// Target mixer deviations; σ_k for each is calibrated by Monte Carlo.
    pub delta_f_values: Vec<f64>,
    pub runs: usize,
    pub targets: usize,
    pub jitter: f64,
    pub max_iterations: usize,
    pub ensemble: HermitianEnsemble,
    pub calibration_draws: usize,
    pub seed: u64,
}

impl Default for PhaseDiffConfig {
    fn default() -> Self {
        Self {
            n: 8,
            m: 0,
            delta_f_values: vec![0.0, 0.0076, 0.0228, 0.0455],
            runs: 100,
            targets: 1,
            jitter: 0.1,
            max_iterations: TRUNCATED_MAX_ITERATIONS,
            ensemble: HermitianEnsemble::default(),
            calibration_draws: 400,
            seed: default_seed(),
        }
    }
}

impl PhaseDiffConfig {
    pub fn layers(&self) -> usize {
        if self.m == 0 {
            self.n + 1
        } else {
            self.m
        }
    }
}

/// Mean and standard deviation of the wrapped difference `x - x̃`, with
/// each component folded into `[-π, π)`.
pub fn phase_difference_stats(x: &[f64], recovered: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = x
        .iter()
        .zip(recovered)
        .map(|(a, b)| (a - b + PI).rem_euclid(TAU) - PI)
        .collect();
    let mu = mean(&d);
    let var = d.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / d.len() as f64;
    (mu, var.sqrt())
}

pub fn phase_difference_study(cfg: &PhaseDiffConfig, ctx: &RunContext) -> Result<Vec<ExperimentRecord>> {
    let plan = SeedPlan::new(cfg.seed);
    let (n, m) = (cfg.n, cfg.layers());
    let spec = JxSpec::canonical(n)?;
    let opts = LmaOptions {
        restarts: 1,
        max_iterations: cfg.max_iterations,
        ..LmaOptions::default()
    };
    opts.validate()?;
    let sigmas: Vec<f64> = cfg
        .delta_f_values
        .iter()
        .map(|&d| sigma_k_for_delta_f(&spec, d, cfg.ensemble, cfg.calibration_draws, plan.task_seed("calibrate", 0)))
        .collect::<Result<_>>()?;
    let modes = ["jittered", "random"];
    let mut units = Vec::new();
    for t in 0..cfg.targets {
        for level in 0..sigmas.len() {
            for mode in 0..modes.len() {
                units.push((t, level, mode));
            }
        }
    }
    run_units(
        units,
        ctx,
        |&(t, level, mode)| format!("t{t:03}/l{level:02}/{}", modes[mode]),
        |&(t, level, mode), key| {
            let x = uniform_phases(m, n, plan.task_seed("reference", t as u64)).concat();
            let ideal = InterlacedCircuit::ideal(&spec, m)?;
            let reference = ideal.with_program(PhaseProgram::from_parts(m, n, x.clone(), ideal.program().mask().to_vec())?)?;
            let target = compose(&reference);
            let sigma_k = sigmas[level];
            let mixers = if sigma_k == 0.0 {
                ideal_mixers(&spec, m)?
            } else {
                perturbed_mixer_set(&spec, m + 1, sigma_k, cfg.ensemble, plan.task_seed(&format!("mixers/l{level}"), t as u64))?
            };
            let circuit = InterlacedCircuit::new(mixers, ideal.program().clone())?;
            let init = if mode == 0 {
                InitStrategy::FromVector { x: x.clone(), jitter: cfg.jitter }
            } else {
                InitStrategy::RandomUniform
            };
            let reference_phases = join_phases(&x);
            let mut out = Vec::with_capacity(cfg.runs);
            for run in 0..cfg.runs {
                let seed = plan.task_seed(&format!("run/t{t}/l{level}/{}", modes[mode]), run as u64);
                let res = fit(&circuit, &target, &opts, &init, seed)?;
                let recovered = res.phases.as_vector();
                let (mu, sd) = phase_difference_stats(&x, recovered);
                let mut r = ExperimentRecord::new(ExperimentKind::PhaseDiff, key, n, m);
                r.target_index = t;
                r.run_index = run;
                r.sigma_k = Some(sigma_k);
                r.init_mode = if mode == 0 { format!("jittered±{}", cfg.jitter) } else { "random".into() };
                r.seed = seed;
                r.loss_after = Some(res.loss);
                r.mu_dx = Some(mu);
                r.sigma_dx = Some(sd);
                r.iterations = res.total_iterations;
                r.restarts_used = res.restarts_used;
                r.converged = res.converged;
                r.reference_phases = reference_phases.clone();
                r.phases = join_phases(&recovered.iter().map(|&v| canonical_phase(v)).collect::<Vec<_>>());
                out.push(r);
            }
            Ok(out)
        },
    )
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseDiffRow {
    pub sigma_k: f64,
    pub init_mode: String,
    pub runs: usize,
    pub low_loss_runs: usize,
    pub median_mu_dx: f64,
    pub median_sigma_dx: f64,
    /// Pearson correlation between reference and recovered phases, pooled
    /// over all runs with loss below `low_loss`.
    pub correlation: Option<f64>,
}

pub fn phase_difference_summary(records: &[ExperimentRecord], low_loss: f64) -> Result<Vec<PhaseDiffRow>> {
    let mut keys: Vec<(f64, String)> = records
        .iter()
        .map(|r| (r.sigma_k.unwrap_or(0.0), r.init_mode.clone()))
        .collect();
    keys.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keys.dedup();
    keys.into_iter()
        .map(|(s, mode)| {
            let rows: Vec<&ExperimentRecord> = records
                .iter()
                .filter(|r| r.sigma_k.unwrap_or(0.0) == s && r.init_mode == mode)
                .collect();
            let (mut xs, mut ys) = (Vec::new(), Vec::new());
            let mut low = 0;
            for r in &rows {
                if r.loss_after.is_some_and(|l| l < low_loss) {
                    low += 1;
                    xs.extend(parse_phases(&r.reference_phases)?.into_iter().map(canonical_phase));
                    ys.extend(parse_phases(&r.phases)?);
                }
            }
            Ok(PhaseDiffRow {
                sigma_k: s,
                init_mode: mode,
                runs: rows.len(),
                low_loss_runs: low,
                median_mu_dx: median(&rows.iter().filter_map(|r| r.mu_dx).collect::<Vec<_>>()),
                median_sigma_dx: median(&rows.iter().filter_map(|r| r.sigma_dx).collect::<Vec<_>>()),
                correlation: (low > 0).then(|| pearson(&xs, &ys)),
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Faulty phase shifters

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaultyConfig {
    pub n: usize,
    /// Phase layers; `0` means `N + 1`.
    pub m: usize,
    pub k_values: Vec<usize>,
    /// Fault plans per k. For `k >= 2` the first half places at most one
    /// fault per layer and the second half puts at least two in one layer.
    pub combos_per_k: usize,
    pub targets: usize,
    pub restarts: usize,
    pub max_iterations: usize,
    /// Stuck value in radians; drawn uniformly from `[0, 2π)` when absent.
    pub fault_value: Option<f64>,
    pub seed: u64,
}

impl Default for FaultyConfig {
    fn default() -> Self {
        Self {
            n: 4,
            m: 0,
            k_values: vec![1, 2, 3, 4],
            combos_per_k: 10,
            targets: 100,
            restarts: 100,
            max_iterations: LmaOptions::default().max_iterations,
            fault_value: None,
            seed: default_seed(),
        }
    }
}

impl FaultyConfig {
    pub fn layers(&self) -> usize {
        if self.m == 0 {
            self.n + 1
        } else {
            self.m
        }
    }
}

/// Fault plan number `combo` with `k` stuck shifters.
pub fn generate_fault_plan(cfg: &FaultyConfig, k: usize, combo: usize, seed: u64) -> Result<Vec<Fault>> {
    let (n, m) = (cfg.n, cfg.layers());
    if k == 0 || k > n * m {
        return Err(Error::InvalidArgument(format!("cannot place {k} faults in {m}x{n} shifters")));
    }
    let mut rng = rng_from_seed(seed);
    let spread = k == 1 || combo < cfg.combos_per_k.div_ceil(2);
    let positions: Vec<(usize, usize)> = if k == 1 {
        // single faults walk through distinct positions
        let order = sample(&mut rng_from_seed(SeedPlan::new(cfg.seed).task_seed("single-order", 0)), n * m, n * m);
        let idx = order.index(combo % (n * m));
        vec![(idx / n, idx % n)]
    } else if spread {
        if k > m {
            return Err(Error::InvalidArgument(format!("{k} faults cannot sit one per layer in {m} layers")));
        }
        sample(&mut rng, m, k)
            .into_iter()
            .map(|layer| (layer, rng.random_range(0..n)))
            .collect()
    } else {
        if n < 2 {
            return Err(Error::InvalidArgument("clustered fault plans need at least two ports".into()));
        }
        let layer = rng.random_range(0..m);
        let mut chosen: Vec<usize> = sample(&mut rng, n, 2).into_iter().map(|p| layer * n + p).collect();
        while chosen.len() < k {
            let idx = rng.random_range(0..n * m);
            if !chosen.contains(&idx) {
                chosen.push(idx);
            }
        }
        chosen.into_iter().map(|i| (i / n, i % n)).collect()
    };
    let mut faults: Vec<Fault> = positions
        .into_iter()
        .map(|(layer, port)| Fault {
            layer,
            port,
            value: cfg.fault_value.unwrap_or_else(|| rng.random_range(0.0..TAU)),
        })
        .collect();
    faults.sort_by_key(|f| (f.layer, f.port));
    Ok(faults)
}

pub fn faulty_shifter_grid(cfg: &FaultyConfig, ctx: &RunContext) -> Result<Vec<ExperimentRecord>> {
    let plan = SeedPlan::new(cfg.seed);
    let (n, m) = (cfg.n, cfg.layers());
    let opts = LmaOptions {
        restarts: cfg.restarts,
        max_iterations: cfg.max_iterations,
        ..LmaOptions::default()
    };
    opts.validate()?;
    let mut units = Vec::new();
    for &k in &cfg.k_values {
        for combo in 0..cfg.combos_per_k {
            let faults = generate_fault_plan(cfg, k, combo, plan.task_seed(&format!("plan/k{k}"), combo as u64))?;
            for t in 0..cfg.targets {
                units.push((k, combo, faults.clone(), t));
            }
        }
    }
    run_units(
        units,
        ctx,
        |(k, combo, _, t)| format!("k{k:02}/c{combo:03}/t{t:05}"),
        |(k, combo, faults, t), key| {
            let spec = JxSpec::canonical(n)?;
            let base = InterlacedCircuit::ideal(&spec, m)?;
            let program = base.program().apply_fault_plan(faults)?;
            let circuit = base.with_program(program.clone())?;
            let target = haar_unitary(n, plan.task_seed("target", *t as u64));
            let seed = plan.task_seed(&format!("fit/k{k}/c{combo}"), *t as u64);
            let res = fit(&circuit, &target, &opts, &InitStrategy::RandomUniform, seed)?;
            let mut r = ExperimentRecord::new(ExperimentKind::Faulty, key, n, m);
            r.fault_plan = format_fault_plan(faults);
            r.fault_count = program.fault_count();
            r.free_count = program.free_count();
            r.max_faults_per_layer = program.max_faults_per_layer();
            r.target_index = *t;
            r.run_index = *combo;
            r.init_mode = "random".into();
            r.seed = seed;
            r.loss_after = Some(res.loss);
            r.iterations = res.total_iterations;
            r.restarts_used = res.restarts_used;
            r.converged = res.converged;
            Ok(vec![r])
        },
    )
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FaultyRow {
    pub k: usize,
    pub combo: usize,
    pub fault_plan: String,
    pub max_faults_per_layer: usize,
    pub targets: usize,
    pub converged_fraction: f64,
    pub median_loss: f64,
    pub max_loss: f64,
}

pub fn faulty_summary(records: &[ExperimentRecord]) -> Vec<FaultyRow> {
    let mut keys: Vec<(usize, usize)> = records.iter().map(|r| (r.fault_count, r.run_index)).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.into_iter()
        .map(|(k, combo)| {
            let rows: Vec<&ExperimentRecord> = records.iter().filter(|r| r.fault_count == k && r.run_index == combo).collect();
            let losses: Vec<f64> = rows.iter().filter_map(|r| r.loss_after).collect();
            FaultyRow {
                k,
                combo,
                fault_plan: rows[0].fault_plan.clone(),
                max_faults_per_layer: rows[0].max_faults_per_layer,
                targets: losses.len(),
                converged_fraction: fraction(&losses, |l| l < NOISE_FLOOR),
                median_loss: median(&losses),
                max_loss: losses.iter().copied().fold(0.0, f64::max),
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Small statistics helpers

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len() / 2;
    if s.len() % 2 == 1 {
        s[k]
    } else {
        0.5 * (s[k - 1] + s[k])
    }
}

pub fn fraction(v: &[f64], pred: impl Fn(f64) -> bool) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().filter(|&&x| pred(x)).count() as f64 / v.len() as f64
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_skip() -> RunContext<'static> {
        RunContext::default()
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ExperimentKind::ALL {
            assert_eq!(ExperimentKind::from_name(k.name()), Some(k));
        }
        assert_eq!(ExperimentKind::from_name("nope"), None);
    }

    #[test]
    fn fault_plan_strings_round_trip() {
        let faults = vec![Fault { layer: 0, port: 3, value: 1.25 }, Fault { layer: 4, port: 0, value: 6.0 }];
        assert_eq!(parse_fault_plan(&format_fault_plan(&faults)).unwrap(), faults);
        assert!(parse_fault_plan("").unwrap().is_empty());
        assert!(parse_fault_plan("1-2@3").is_err());
    }

    #[test]
    fn scalar_universality_is_exact() {
        let cfg = UniversalityConfig {
            n_values: vec![1],
            m_offsets: vec![0],
            targets: 10,
            restarts: 2,
            ..Default::default()
        };
        let recs = universality_sweep(&cfg, &no_skip()).unwrap();
        assert_eq!(recs.len(), 10);
        assert!(recs.iter().all(|r| r.loss_after.unwrap() < NOISE_FLOOR && r.converged));
    }

    #[test]
    fn zero_sigma_rows_have_no_deviation() {
        let cfg = PerturbationConfig {
            n: 3,
            sigma_k_values: vec![0.0, 0.002],
            targets: 3,
            restarts: 10,
            attempts: 3,
            ..Default::default()
        };
        let recs = recalibration_histogram(&cfg, &no_skip()).unwrap();
        assert_eq!(recs.len(), 6);
        for r in recs.iter().filter(|r| r.sigma_k == Some(0.0)) {
            assert_eq!(r.delta_f, Some(0.0));
            assert!((r.delta_u.unwrap() / relative_deviation_zero_check(r) - 1.0).abs() < 1e-9);
            assert_eq!(r.loss_before, r.reference_loss);
        }
    }

    fn relative_deviation_zero_check(r: &ExperimentRecord) -> f64 {
        // with unperturbed mixers U_p is the ideal fit, so ΔU² = N · loss
        (r.n as f64 * r.reference_loss.unwrap()).sqrt()
    }

    #[test]
    fn loss_before_matches_delta_u() {
        let cfg = PerturbationConfig {
            n: 4,
            sigma_k_values: vec![0.004],
            targets: 4,
            restarts: 10,
            ..Default::default()
        };
        for r in perturbation_table(&cfg, &no_skip()).unwrap() {
            let du = r.delta_u.unwrap();
            let lb = r.loss_before.unwrap();
            assert!((lb - du * du / r.n as f64).abs() < 1e-12 * lb.max(1e-300) + 1e-15);
        }
    }

    #[test]
    fn exact_initial_vector_gives_zero_difference() {
        let x = uniform_phases(3, 2, 1).concat();
        let (mu, sd) = phase_difference_stats(&x, &x);
        assert_eq!((mu, sd), (0.0, 0.0));
        let shifted: Vec<f64> = x.iter().map(|v| v + TAU).collect();
        let (mu, sd) = phase_difference_stats(&x, &shifted);
        assert!(mu.abs() < 1e-12 && sd < 1e-12);
    }

    #[test]
    fn fault_plans_follow_layout_rules() {
        let cfg = FaultyConfig::default();
        let plan = SeedPlan::new(cfg.seed);
        let mut singles = HashSet::new();
        for combo in 0..cfg.combos_per_k {
            let f = generate_fault_plan(&cfg, 1, combo, plan.task_seed("x", combo as u64)).unwrap();
            assert_eq!(f.len(), 1);
            singles.insert((f[0].layer, f[0].port));
        }
        assert_eq!(singles.len(), cfg.combos_per_k);
        for k in 2..=4 {
            for combo in 0..cfg.combos_per_k {
                let faults = generate_fault_plan(&cfg, k, combo, combo as u64 * 31 + k as u64).unwrap();
                let program = PhaseProgram::zeros(cfg.layers(), cfg.n).apply_fault_plan(&faults).unwrap();
                assert_eq!(program.fault_count(), k);
                assert_eq!(program.free_count(), cfg.n * (cfg.n + 1) - k);
                if combo < cfg.combos_per_k / 2 {
                    assert_eq!(program.max_faults_per_layer(), 1);
                } else {
                    assert!(program.max_faults_per_layer() >= 2);
                }
            }
        }
    }

    #[test]
    fn sigma_calibration_inverts_delta_f() {
        let spec = JxSpec::canonical(6).unwrap();
        let s = sigma_k_for_delta_f(&spec, 0.02, HermitianEnsemble::Entrywise, 300, 1).unwrap();
        let got = mean_delta_f(&spec, s, HermitianEnsemble::Entrywise, 300, 2).unwrap();
        assert!((got / 0.02 - 1.0).abs() < 0.05, "{got}");
        assert_eq!(sigma_k_for_delta_f(&spec, 0.0, HermitianEnsemble::Entrywise, 10, 1).unwrap(), 0.0);
    }

    #[test]
    fn resume_skips_completed_units() {
        let cfg = UniversalityConfig {
            n_values: vec![2],
            m_offsets: vec![1],
            targets: 4,
            restarts: 3,
            ..Default::default()
        };
        let all = universality_sweep(&cfg, &no_skip()).unwrap();
        let skip: HashSet<String> = all[..2].iter().map(|r| r.unit.clone()).collect();
        let rest = universality_sweep(&cfg, &RunContext::skipping(skip)).unwrap();
        assert_eq!(rest.len(), 2);
        let mut merged: Vec<_> = all[..2].iter().cloned().chain(rest).collect();
        canonicalize(&mut merged);
        let strip = |v: &[ExperimentRecord]| v.iter().map(ExperimentRecord::without_timing).collect::<Vec<_>>();
        assert_eq!(strip(&merged), strip(&all));
    }

    #[test]
    fn statistics_helpers() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - 1.0).abs() < 1e-15);
        assert_eq!(fraction(&[1.0, 2.0, 3.0, 4.0], |x| x > 2.5), 0.5);
    }
}
