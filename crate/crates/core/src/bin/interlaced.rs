//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 when a fit does not reach the target loss,
//! 2 on usage, parse or I/O errors.

use std::collections::HashSet;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use interlaced::circuit::{compose, loss, InterlacedCircuit};
use interlaced::experiments::{self as ex, ExperimentKind, ExperimentRecord, RunContext};
use interlaced::io::{self, IoError, MatrixRole};
use interlaced::lattice::{perturbed_mixer_set, JxSpec};
use interlaced::optimizer::{fit, recalibrate, InitStrategy, LmaOptions, TRUNCATED_MAX_ITERATIONS};
use interlaced::plot::{histogram, Figure, Series};
use interlaced::sampling::{haar_unitary, HermitianEnsemble, SeedPlan, RNG_NAME};

#[derive(Parser)]
#[command(name = "interlaced", version, about = "Interlaced DFrFT / phase-layer decompositions of unitary matrices")]
struct Cli {
    /// Worker threads; 1 runs everything serially.
    #[arg(long, global = true, env = "INTERLACED_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit phases so the circuit reproduces a target unitary.
    Decompose(DecomposeArgs),
    /// Compose the unitary realized by a phase file.
    Apply(ApplyArgs),
    /// Re-optimize phases against perturbed mixers.
    Calibrate(CalibrateArgs),
    /// Run an experiment and write records, metadata and a plot.
    Experiment(ExperimentArgs),
    /// Draw Haar-random unitaries.
    Haar(HaarArgs),
}

#[derive(Args)]
struct FitFlags {
    /// Independent random restarts.
    #[arg(long, default_value_t = LmaOptions::default().restarts)]
    restarts: usize,
    #[arg(long, default_value_t = LmaOptions::default().max_iterations)]
    max_iterations: usize,
    /// A fit counts as converged below this loss.
    #[arg(long, default_value_t = LmaOptions::default().target_loss)]
    target_loss: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct DecomposeArgs {
    #[arg(long)]
    target: PathBuf,
    /// Phase layers M; defaults to N + 1.
    #[arg(long)]
    layers: Option<usize>,
    /// Lattice coupling scale.
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    /// Stuck shifters as `layer:port@radians;...` (zero-based).
    #[arg(long)]
    faults: Option<String>,
    #[command(flatten)]
    fit: FitFlags,
    /// Where to write the fitted phases.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum EnsembleArg {
    Entrywise,
    Symmetrized,
}

impl From<EnsembleArg> for HermitianEnsemble {
    fn from(e: EnsembleArg) -> Self {
        match e {
            EnsembleArg::Entrywise => HermitianEnsemble::Entrywise,
            EnsembleArg::Symmetrized => HermitianEnsemble::Symmetrized,
        }
    }
}

#[derive(Args)]
struct MixerFlags {
    /// Relative coupling disorder σ_k (dimensionless); 0 means ideal mixers.
    #[arg(long, default_value_t = 0.0)]
    sigma_k: f64,
    /// Seed of the mixer perturbations.
    #[arg(long, default_value_t = 0)]
    mixer_seed: u64,
    #[arg(long, value_enum, default_value_t = EnsembleArg::Entrywise)]
    ensemble: EnsembleArg,
}

#[derive(Args)]
struct ApplyArgs {
    #[arg(long)]
    phases: PathBuf,
    #[command(flatten)]
    mixers: MixerFlags,
    /// Same as `--mixer-seed`.
    #[arg(long, conflicts_with = "mixer_seed")]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum CalibrationInit {
    /// Fresh uniform phases for every attempt.
    Random,
    /// Start from the uncorrected phases, scaled by `1 + U[-jitter, jitter]`.
    Uncorrected,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    target: PathBuf,
    /// Uncorrected phases, fitted against ideal mixers.
    #[arg(long)]
    phases: PathBuf,
    #[command(flatten)]
    mixers: MixerFlags,
    /// Truncated fits tried before giving up.
    #[arg(long, default_value_t = 10)]
    attempts: usize,
    #[arg(long, default_value_t = TRUNCATED_MAX_ITERATIONS)]
    max_iterations: usize,
    #[arg(long, default_value_t = LmaOptions::default().target_loss)]
    target_loss: f64,
    #[arg(long, value_enum, default_value_t = CalibrationInit::Random)]
    init: CalibrationInit,
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentName {
    Universality,
    Table1,
    Recalibration,
    Phasediff,
    Faulty,
}

impl ExperimentName {
    fn kind(self) -> ExperimentKind {
        match self {
            ExperimentName::Universality => ExperimentKind::Universality,
            ExperimentName::Table1 => ExperimentKind::Table1,
            ExperimentName::Recalibration => ExperimentKind::Recalibration,
            ExperimentName::Phasediff => ExperimentKind::PhaseDiff,
            ExperimentName::Faulty => ExperimentKind::Faulty,
        }
    }
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(value_enum)]
    name: ExperimentName,
    /// TOML file with flat `key = value` overrides of the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the master seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Keep records already in the output directory and run only the rest.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct HaarArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Io(IoError),
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::Io(e)
    }
}

impl From<interlaced::Error> for Failure {
    fn from(e: interlaced::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CmdResult = Result<bool, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let outcome = match cli.command {
        Command::Decompose(a) => decompose(a),
        Command::Apply(a) => apply(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Experiment(a) => experiment(a),
        Command::Haar(a) => haar(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn load_target(path: &Path) -> Result<interlaced::numerics::ComplexMatrix, Failure> {
    let loaded = io::read_matrix(path)?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    if !loaded.matrix.is_square() {
        return Err(Failure::Usage(format!("{}: target must be square", path.display())));
    }
    Ok(loaded.matrix)
}

fn decompose(a: DecomposeArgs) -> CmdResult {
    let target = load_target(&a.target)?;
    let n = target.rows();
    let m = a.layers.unwrap_or(n + 1);
    if m == 0 {
        return Err(Failure::Usage("--layers must be at least 1".into()));
    }
    let spec = JxSpec::new(n, a.kappa)?;
    let mut circuit = InterlacedCircuit::ideal(&spec, m)?;
    if let Some(plan) = &a.faults {
        let faults = ex::parse_fault_plan(plan)?;
        circuit = circuit.with_program(circuit.program().apply_fault_plan(&faults)?)?;
    }
    let opts = LmaOptions {
        restarts: a.fit.restarts,
        max_iterations: a.fit.max_iterations,
        target_loss: a.fit.target_loss,
        ..LmaOptions::default()
    };
    let res = fit(&circuit, &target, &opts, &InitStrategy::RandomUniform, a.fit.seed)?;
    println!("N = {n}, M = {m}, free phases = {}", res.phases.free_count());
    println!("loss = {:.6e}", res.loss);
    println!("restarts used = {}, iterations = {}", res.restarts_used, res.total_iterations);
    println!("converged = {}", res.converged);
    if let Some(out) = &a.out {
        io::write_phases(out, &res.phases, a.kappa)?;
    }
    Ok(res.converged)
}

fn mixers_for(flags: &MixerFlags, spec: &JxSpec, layers: usize) -> Result<Vec<interlaced::lattice::MixingLayer>, Failure> {
    Ok(perturbed_mixer_set(spec, layers + 1, flags.sigma_k, flags.ensemble.into(), flags.mixer_seed)?)
}

fn apply(mut a: ApplyArgs) -> CmdResult {
    if let Some(seed) = a.seed {
        a.mixers.mixer_seed = seed;
    }
    let file = io::read_phases(&a.phases)?;
    let program = file.to_program()?;
    let spec = JxSpec::new(file.n, file.kappa)?;
    let circuit = InterlacedCircuit::new(mixers_for(&a.mixers, &spec, file.m)?, program)?;
    io::write_matrix(&a.out, &compose(&circuit), MatrixRole::Unitary)?;
    Ok(true)
}

fn calibrate(a: CalibrateArgs) -> CmdResult {
    let target = load_target(&a.target)?;
    let file = io::read_phases(&a.phases)?;
    if file.n != target.rows() {
        return Err(Failure::Usage(format!(
            "phase file is for N = {} but the target is {}x{}",
            file.n,
            target.rows(),
            target.cols()
        )));
    }
    let spec = JxSpec::new(file.n, file.kappa)?;
    let perturbed = InterlacedCircuit::new(mixers_for(&a.mixers, &spec, file.m)?, file.to_program()?)?;
    let before = loss(&compose(&perturbed), &target)?;
    let opts = LmaOptions {
        max_iterations: a.max_iterations,
        target_loss: a.target_loss,
        ..LmaOptions::default()
    };
    let init = match a.init {
        CalibrationInit::Random => InitStrategy::RandomUniform,
        CalibrationInit::Uncorrected => InitStrategy::FromVector {
            x: perturbed.program().as_vector().to_vec(),
            jitter: a.jitter,
        },
    };
    let res = recalibrate(&perturbed, &target, &opts, a.attempts, &init, a.seed)?;
    println!("loss_before = {before:.6e}");
    println!("loss_after = {:.6e}", res.loss);
    println!("attempts used = {}, iterations = {}", res.restarts_used, res.total_iterations);
    if let Some(out) = &a.out {
        io::write_phases(out, &res.phases, file.kappa)?;
    }
    Ok(res.converged)
}

fn haar(a: HaarArgs) -> CmdResult {
    if a.n == 0 {
        return Err(Failure::Usage("--n must be at least 1".into()));
    }
    let plan = SeedPlan::new(a.seed);
    for i in 0..a.count {
        let path = a.out.join(format!("haar-n{}-{i:04}.json", a.n));
        io::write_matrix(&path, &haar_unitary(a.n, plan.task_seed("haar", i as u64)), MatrixRole::Unitary)?;
        println!("{}", path.display());
    }
    Ok(true)
}

// ---------------------------------------------------------------------------
// Experiments

fn load_config<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, Failure> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|source| IoError::Io { path: path.to_path_buf(), source })?;
    toml::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

struct Outputs {
    csv: PathBuf,
    partial: PathBuf,
    meta: PathBuf,
    svg: PathBuf,
}

impl Outputs {
    fn new(dir: &Path, name: &str) -> Self {
        Self {
            csv: dir.join(format!("{name}.csv")),
            partial: dir.join(format!("{name}.partial.csv")),
            meta: dir.join(format!("{name}.json")),
            svg: dir.join(format!("{name}.svg")),
        }
    }
}

/// Records from earlier runs, minus the last unit of an interrupted partial
/// file (it may be incomplete).
fn previous_records(out: &Outputs) -> Result<Vec<ExperimentRecord>, Failure> {
    let mut recs = Vec::new();
    if out.csv.exists() {
        recs.extend(io::read_records_file(&out.csv, false)?);
    }
    if out.partial.exists() {
        let mut partial = io::read_records_file(&out.partial, true)?;
        if let Some(last) = partial.last().map(|r| r.unit.clone()) {
            partial.retain(|r| r.unit != last);
        }
        let done: HashSet<String> = recs.iter().map(|r| r.unit.clone()).collect();
        recs.extend(partial.into_iter().filter(|r| !done.contains(&r.unit)));
    }
    Ok(recs)
}

fn experiment(a: ExperimentArgs) -> CmdResult {
    let kind = a.name.kind();
    let out = Outputs::new(&a.out, kind.name());
    fs::create_dir_all(&a.out).map_err(|source| IoError::Io { path: a.out.clone(), source })?;

    let previous = if a.resume { previous_records(&out)? } else { Vec::new() };
    let skip: HashSet<String> = previous.iter().map(|r| r.unit.clone()).collect();
    if !previous.is_empty() {
        eprintln!("resuming: {} records from {} completed units", previous.len(), skip.len());
    }

    // Rewrite the partial file from the retained records, then append units
    // as they finish so an interrupted run can resume.
    let mut partial = fs::File::create(&out.partial).map_err(|source| IoError::Io { path: out.partial.clone(), source })?;
    io::write_records(&mut partial, &previous, true).map_err(|e| Failure::Usage(e.to_string()))?;
    let writer = Mutex::new(partial);
    let sink = |recs: &[ExperimentRecord]| {
        let mut buf = Vec::new();
        if io::write_records(&mut buf, recs, false).is_ok() {
            let mut f = writer.lock().expect("writer lock");
            let _ = f.write_all(&buf).and_then(|_| f.flush());
        }
    };
    let ctx = RunContext { skip, on_unit: Some(&sink) };

    let cfg = a.config.as_deref();
    let (fresh, config, seed) = match kind {
        ExperimentKind::Universality => {
            let mut c: ex::UniversalityConfig = load_config(cfg)?;
            c.seed = a.seed.unwrap_or(c.seed);
            (ex::universality_sweep(&c, &ctx)?, to_value(&c), c.seed)
        }
        ExperimentKind::Table1 | ExperimentKind::Recalibration => {
            let mut c: ex::PerturbationConfig = load_config(cfg)?;
            c.seed = a.seed.unwrap_or(c.seed);
            let recs = if kind == ExperimentKind::Table1 {
                ex::perturbation_table(&c, &ctx)?
            } else {
                ex::recalibration_histogram(&c, &ctx)?
            };
            (recs, to_value(&c), c.seed)
        }
        ExperimentKind::PhaseDiff => {
            let mut c: ex::PhaseDiffConfig = load_config(cfg)?;
            c.seed = a.seed.unwrap_or(c.seed);
            (ex::phase_difference_study(&c, &ctx)?, to_value(&c), c.seed)
        }
        ExperimentKind::Faulty => {
            let mut c: ex::FaultyConfig = load_config(cfg)?;
            c.seed = a.seed.unwrap_or(c.seed);
            (ex::faulty_shifter_grid(&c, &ctx)?, to_value(&c), c.seed)
        }
    };
    drop(writer);

    let mut records = previous;
    records.extend(fresh);
    ex::canonicalize(&mut records);
    io::write_records_file(&out.csv, &records)?;
    let _ = fs::remove_file(&out.partial);

    let (summary, table) = summarize(kind, &records)?;
    io::write_svg(&out.svg, &render_plot(kind, &records))?;
    io::write_metadata(
        &out.meta,
        &io::ExperimentMetadata {
            schema_version: io::SCHEMA_VERSION.into(),
            experiment: kind.name().into(),
            crate_version: env!("CARGO_PKG_VERSION").into(),
            rng: RNG_NAME.into(),
            master_seed: seed,
            records: records.len(),
            config,
            summary,
        },
    )?;
    print!("{table}");
    println!("wrote {} records to {}", records.len(), out.csv.display());
    Ok(true)
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("serializable value")
}

fn sci(v: f64) -> String {
    format!("{v:.3e}")
}

fn pct(v: f64) -> String {
    format!("{:.3}%", 100.0 * v)
}

fn render_table(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in &rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<String>| {
        let mut s = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect::<Vec<_>>()
            .join("  ");
        s.push('\n');
        s
    };
    let mut out = line(header.iter().map(|h| h.to_string()).collect());
    for r in rows {
        out.push_str(&line(r));
    }
    out
}

fn summarize(kind: ExperimentKind, records: &[ExperimentRecord]) -> Result<(serde_json::Value, String), Failure> {
    Ok(match kind {
        ExperimentKind::Universality => {
            let rows = ex::universality_summary(records);
            let table = render_table(
                &["N", "M", "targets", "frac<1e-10", "min", "median", "max"],
                rows.iter()
                    .map(|r| {
                        vec![
                            r.n.to_string(),
                            r.m.to_string(),
                            r.targets.to_string(),
                            format!("{:.2}", r.converged_fraction),
                            sci(r.min_loss),
                            sci(r.median_loss),
                            sci(r.max_loss),
                        ]
                    })
                    .collect(),
            );
            (to_value(&rows), table)
        }
        ExperimentKind::Table1 | ExperimentKind::Recalibration => {
            let rows = ex::perturbation_summary(records);
            let table = render_table(
                &["sigma_k", "samples", "mean dF", "mean dU", "dU/dF", "before>1e-5", "after<1e-10"],
                rows.iter()
                    .map(|r| {
                        vec![
                            r.sigma_k.to_string(),
                            r.samples.to_string(),
                            pct(r.mean_delta_f),
                            pct(r.mean_delta_u),
                            format!("{:.3}", r.ratio),
                            format!("{:.2}", r.before_above_1e5),
                            r.after_below_floor.map_or("-".into(), |f| format!("{f:.2}")),
                        ]
                    })
                    .collect(),
            );
            (to_value(&rows), table)
        }
        ExperimentKind::PhaseDiff => {
            let rows = ex::phase_difference_summary(records, 1e-8)?;
            let table = render_table(
                &["sigma_k", "init", "runs", "L<1e-8", "median mu_dx", "median sigma_dx", "corr(x, x~)"],
                rows.iter()
                    .map(|r| {
                        vec![
                            format!("{:.5}", r.sigma_k),
                            r.init_mode.clone(),
                            r.runs.to_string(),
                            r.low_loss_runs.to_string(),
                            sci(r.median_mu_dx),
                            format!("{:.4}", r.median_sigma_dx),
                            r.correlation.map_or("-".into(), |c| format!("{c:.4}")),
                        ]
                    })
                    .collect(),
            );
            (to_value(&rows), table)
        }
        ExperimentKind::Faulty => {
            let rows = ex::faulty_summary(records);
            let table = render_table(
                &["k", "combo", "max/layer", "targets", "frac<1e-10", "median", "max", "plan"],
                rows.iter()
                    .map(|r| {
                        vec![
                            r.k.to_string(),
                            r.combo.to_string(),
                            r.max_faults_per_layer.to_string(),
                            r.targets.to_string(),
                            format!("{:.2}", r.converged_fraction),
                            sci(r.median_loss),
                            sci(r.max_loss),
                            r.fault_plan.clone(),
                        ]
                    })
                    .collect(),
            );
            (to_value(&rows), table)
        }
    })
}

fn render_plot(kind: ExperimentKind, records: &[ExperimentRecord]) -> String {
    let loss_after = |r: &ExperimentRecord| r.loss_after.unwrap_or(f64::NAN);
    match kind {
        ExperimentKind::Universality => {
            let mut ns: Vec<usize> = records.iter().map(|r| r.n).collect();
            ns.dedup();
            Figure {
                title: "Best loss versus phase layers".into(),
                x_label: "phase layers M".into(),
                y_label: "loss".into(),
                y_log: true,
                series: ns
                    .iter()
                    .map(|&n| {
                        Series::new(
                            format!("N = {n}"),
                            records.iter().filter(|r| r.n == n).map(|r| (r.m as f64, loss_after(r))).collect(),
                        )
                    })
                    .collect(),
                h_lines: vec![ex::NOISE_FLOOR],
                ..Default::default()
            }
            .to_svg()
        }
        ExperimentKind::Table1 => Figure {
            title: "Mixer versus end-to-end deviation".into(),
            x_label: "dF".into(),
            y_label: "dU".into(),
            x_log: true,
            y_log: true,
            series: sigma_groups(records)
                .into_iter()
                .map(|(s, rs)| Series::new(format!("sigma_k = {s}"), rs.iter().map(|r| (r.delta_f.unwrap_or(f64::NAN), r.delta_u.unwrap_or(f64::NAN))).collect()))
                .collect(),
            ..Default::default()
        }
        .to_svg(),
        ExperimentKind::Recalibration => {
            let before: Vec<f64> = records.iter().filter_map(|r| r.loss_before).collect();
            let after: Vec<f64> = records.iter().filter_map(|r| r.loss_after).collect();
            histogram("Loss before and after recalibration", "loss", &[("before", &before), ("after", &after)], 40, true)
        }
        ExperimentKind::PhaseDiff => {
            let mut modes: Vec<String> = records.iter().map(|r| r.init_mode.clone()).collect();
            modes.sort();
            modes.dedup();
            Figure {
                title: "Phase difference statistics".into(),
                x_label: "mean of dx".into(),
                y_label: "std of dx".into(),
                series: modes
                    .iter()
                    .map(|m| {
                        Series::new(
                            m.clone(),
                            records
                                .iter()
                                .filter(|r| &r.init_mode == m)
                                .map(|r| (r.mu_dx.unwrap_or(f64::NAN), r.sigma_dx.unwrap_or(f64::NAN)))
                                .collect(),
                        )
                    })
                    .collect(),
                ..Default::default()
            }
            .to_svg()
        }
        ExperimentKind::Faulty => {
            let rows = ex::faulty_summary(records);
            let index = |r: &ExperimentRecord| rows.iter().position(|s| s.k == r.fault_count && s.combo == r.run_index).unwrap_or(0) as f64;
            Figure {
                title: "Loss per fault plan".into(),
                x_label: "fault plan".into(),
                y_label: "loss".into(),
                y_log: true,
                series: vec![
                    Series::new(
                        "at most one per layer",
                        records.iter().filter(|r| r.max_faults_per_layer <= 1).map(|r| (index(r), loss_after(r))).collect(),
                    ),
                    Series::new(
                        "two or more in a layer",
                        records.iter().filter(|r| r.max_faults_per_layer > 1).map(|r| (index(r), loss_after(r))).collect(),
                    ),
                ],
                h_lines: vec![ex::NOISE_FLOOR],
                ..Default::default()
            }
            .to_svg()
        }
    }
}

fn sigma_groups(records: &[ExperimentRecord]) -> Vec<(f64, Vec<&ExperimentRecord>)> {
    let mut sigmas: Vec<f64> = records.iter().filter_map(|r| r.sigma_k).collect();
    sigmas.sort_by(f64::total_cmp);
    sigmas.dedup();
    sigmas
        .into_iter()
        .map(|s| (s, records.iter().filter(|r| r.sigma_k == Some(s)).collect()))
        .collect()
}
