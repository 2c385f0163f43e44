//! Levenberg–Marquardt fitting of free phases.
//!
//! The solver itself works on any [`LeastSquaresProblem`]; circuits are fitted
//! through [`CircuitProblem`], which evaluates residuals and the analytic
//! Jacobian with reusable buffers.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{check_target, compose, loss, InterlacedCircuit, PhaseProgram, Workspace};
use crate::error::{Error, Result};
use crate::numerics::ComplexMatrix;
use crate::sampling::{jitter_phases_with, rng_from_seed, SeedPlan};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmaOptions {
    /// Relative decrease of the loss below which a descent stops.
    pub function_tolerance: f64,
    /// Step size (relative to `||x||`) below which a descent stops.
    pub step_tolerance: f64,
    /// Max-norm of `J^T r` below which a descent stops.
    pub optimality_tolerance: f64,
    pub max_iterations: usize,
    pub restarts: usize,
    /// A fit counts as converged once its loss drops below this.
    pub target_loss: f64,
    /// Initial multiplier of `diag(J^T J)`.
    pub damping_initial: f64,
    pub damping_factor: f64,
    /// Rejection limit; a descent ends once damping grows past it.
    pub damping_max: f64,
}

impl Default for LmaOptions {
    fn default() -> Self {
        Self {
            function_tolerance: 1e-6,
            step_tolerance: 1e-6,
            optimality_tolerance: 1e-10,
            max_iterations: 400,
            restarts: 100,
            target_loss: 1e-10,
            damping_initial: 1e-3,
            damping_factor: 2.0,
            damping_max: 1e16,
        }
    }
}

/// Iteration cap of the truncated solver used for recalibration.
pub const TRUNCATED_MAX_ITERATIONS: usize = 50;

impl LmaOptions {
    /// Default tolerances with the iteration cap lowered to 50.
    pub fn truncated() -> Self {
        Self {
            max_iterations: TRUNCATED_MAX_ITERATIONS,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let tols = [
            ("function_tolerance", self.function_tolerance),
            ("step_tolerance", self.step_tolerance),
            ("optimality_tolerance", self.optimality_tolerance),
            ("target_loss", self.target_loss),
            ("damping_initial", self.damping_initial),
        ];
        for (name, v) in tols {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.damping_factor > 1.0) {
            return Err(Error::InvalidArgument("damping_factor must exceed 1".into()));
        }
        if !(self.damping_max > self.damping_initial) {
            return Err(Error::InvalidArgument("damping_max must exceed damping_initial".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidArgument("restarts must be at least 1".into()));
        }
        Ok(())
    }
}

/// How each restart picks its starting phases.
#[derive(Clone, Debug, PartialEq)]
pub enum InitStrategy {
    /// I.i.d. uniform phases in `[0, 2π)`.
    RandomUniform,
    /// A full layer-major phase vector, each entry scaled by `1 + u` with
    /// `u ~ U[-jitter, jitter]`.
    FromVector { x: Vec<f64>, jitter: f64 },
}

impl InitStrategy {
    fn validate(&self, len: usize) -> Result<()> {
        if let InitStrategy::FromVector { x, jitter } = self {
            if x.len() != len {
                return Err(Error::dims(format!("{len} initial phases"), x.len()));
            }
            if !(0.0..1.0).contains(jitter) {
                return Err(Error::InvalidArgument(format!("jitter must lie in [0, 1), got {jitter}")));
            }
        }
        Ok(())
    }

    /// Starting values for the free entries of `program`.
    pub fn draw<R: Rng + ?Sized>(&self, program: &PhaseProgram, rng: &mut R) -> Vec<f64> {
        let full = match self {
            InitStrategy::RandomUniform => {
                crate::sampling::uniform_phases_with(program.layers(), program.ports(), rng).concat()
            }
            InitStrategy::FromVector { x, jitter } => jitter_phases_with(x, *jitter, rng),
        };
        program.free_indices().into_iter().map(|i| full[i]).collect()
    }
}

/// Residual model for the solver.
pub trait LeastSquaresProblem {
    fn num_params(&self) -> usize;
    fn num_residuals(&self) -> usize;
    /// Writes residuals for `x` into `out` and returns their sum of squares.
    fn residuals(&mut self, x: &[f64], out: &mut [f64]) -> f64;
    /// Writes the Jacobian at `x` into `jac` (`num_residuals x num_params`).
    fn jacobian(&mut self, x: &[f64], jac: &mut DMatrix<f64>);
}

/// Fits the free phases of a circuit to a target.
pub struct CircuitProblem<'a> {
    circuit: InterlacedCircuit,
    target: &'a ComplexMatrix,
    workspace: Workspace,
}

impl<'a> CircuitProblem<'a> {
    pub fn new(circuit: &InterlacedCircuit, target: &'a ComplexMatrix) -> Result<Self> {
        check_target(circuit, target)?;
        Ok(Self {
            circuit: circuit.clone(),
            target,
            workspace: Workspace::new(circuit.n(), circuit.layers()),
        })
    }

    fn load(&mut self, x: &[f64]) {
        self.circuit
            .program_mut()
            .set_free_values(x)
            .expect("parameter count matches free phases");
    }
}

impl LeastSquaresProblem for CircuitProblem<'_> {
    fn num_params(&self) -> usize {
        self.circuit.program().free_count()
    }

    fn num_residuals(&self) -> usize {
        2 * self.circuit.n() * self.circuit.n()
    }

    fn residuals(&mut self, x: &[f64], out: &mut [f64]) -> f64 {
        self.load(x);
        let l = self.workspace.evaluate(&self.circuit, self.target, None);
        out.copy_from_slice(&self.workspace.residuals);
        l
    }

    fn jacobian(&mut self, x: &[f64], jac: &mut DMatrix<f64>) {
        self.load(x);
        self.workspace.evaluate(&self.circuit, self.target, Some(jac));
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub phases: Vec<f64>,
    pub loss: f64,
    pub damping: f64,
    /// Norm of the accepted step; zero when nothing was accepted.
    pub step_norm: f64,
    pub gradient_inf_norm: f64,
    pub outcome: StepOutcome,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Accepted,
    /// `||J^T r||_∞` already below the optimality tolerance.
    Stationary,
    /// Damping exceeded its limit without a decrease in loss.
    Failed,
}

/// Why a single descent ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TargetLoss,
    FunctionTolerance,
    StepTolerance,
    Optimality,
    MaxIterations,
    DampingLimit,
}

struct Scratch {
    residuals: Vec<f64>,
    jac: DMatrix<f64>,
}

impl Scratch {
    fn new<P: LeastSquaresProblem + ?Sized>(p: &P) -> Self {
        Self {
            residuals: vec![0.0; p.num_residuals()],
            jac: DMatrix::zeros(p.num_residuals(), p.num_params()),
        }
    }
}

fn step_inner<P: LeastSquaresProblem + ?Sized>(
    problem: &mut P,
    scratch: &mut Scratch,
    x: &[f64],
    current_loss: f64,
    damping: f64,
    options: &LmaOptions,
) -> StepResult {
    problem.jacobian(x, &mut scratch.jac);
    let r = DVector::from_column_slice(&scratch.residuals);
    let grad = scratch.jac.tr_mul(&r);
    let gradient_inf_norm = grad.amax();
    if gradient_inf_norm < options.optimality_tolerance {
        return StepResult {
            phases: x.to_vec(),
            loss: current_loss,
            damping,
            step_norm: 0.0,
            gradient_inf_norm,
            outcome: StepOutcome::Stationary,
        };
    }
    let jtj = scratch.jac.tr_mul(&scratch.jac);
    let n = jtj.nrows();
    let diag_floor = f64::EPSILON * jtj.diagonal().amax().max(f64::MIN_POSITIVE);
    let mut lambda = damping;
    let mut trial = vec![0.0; n];
    let mut trial_residuals = vec![0.0; scratch.residuals.len()];
    while lambda <= options.damping_max {
        let mut damped = jtj.clone();
        for i in 0..n {
            damped[(i, i)] += lambda * jtj[(i, i)].max(diag_floor);
        }
        let Some(chol) = Cholesky::new(damped) else {
            lambda *= options.damping_factor;
            continue;
        };
        let delta = chol.solve(&(-&grad));
        for ((t, xi), d) in trial.iter_mut().zip(x).zip(delta.iter()) {
            *t = xi + d;
        }
        let trial_loss = problem.residuals(&trial, &mut trial_residuals);
        if trial_loss.is_finite() && trial_loss < current_loss {
            scratch.residuals.copy_from_slice(&trial_residuals);
            return StepResult {
                phases: trial,
                loss: trial_loss,
                damping: (lambda / options.damping_factor).max(f64::MIN_POSITIVE),
                step_norm: delta.norm(),
                gradient_inf_norm,
                outcome: StepOutcome::Accepted,
            };
        }
        lambda *= options.damping_factor;
    }
    StepResult {
        phases: x.to_vec(),
        loss: current_loss,
        damping: lambda,
        step_norm: 0.0,
        gradient_inf_norm,
        outcome: StepOutcome::Failed,
    }
}

/// One damped Gauss–Newton step: solves `(J^T J + λ diag(J^T J)) δ = -J^T r`,
/// accepting the step (and dividing `λ` by the damping factor) if the loss
/// decreases, otherwise multiplying `λ` and retrying.
pub fn lma_step<P: LeastSquaresProblem + ?Sized>(
    problem: &mut P,
    phases: &[f64],
    damping: f64,
    options: &LmaOptions,
) -> Result<StepResult> {
    if phases.len() != problem.num_params() {
        return Err(Error::dims(format!("{} parameters", problem.num_params()), phases.len()));
    }
    if !(damping > 0.0) {
        return Err(Error::InvalidArgument("damping must be positive".into()));
    }
    let mut scratch = Scratch::new(problem);
    let l = problem.residuals(phases, &mut scratch.residuals);
    Ok(step_inner(problem, &mut scratch, phases, l, damping, options))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Descent {
    pub x: Vec<f64>,
    pub loss: f64,
    pub iterations: usize,
    pub stop: StopReason,
    /// Loss after every accepted step, starting with the initial loss.
    pub history: Vec<f64>,
}

/// A single Levenberg–Marquardt descent from `x0`.
pub fn descend<P: LeastSquaresProblem + ?Sized>(problem: &mut P, x0: &[f64], options: &LmaOptions) -> Descent {
    let mut scratch = Scratch::new(problem);
    let mut x = x0.to_vec();
    let mut current = problem.residuals(&x, &mut scratch.residuals);
    let mut history = vec![current];
    let mut damping = options.damping_initial;
    let mut iterations = 0;
    let stop = loop {
        if current < options.target_loss {
            break StopReason::TargetLoss;
        }
        if iterations >= options.max_iterations {
            break StopReason::MaxIterations;
        }
        iterations += 1;
        let step = step_inner(problem, &mut scratch, &x, current, damping, options);
        match step.outcome {
            StepOutcome::Stationary => break StopReason::Optimality,
            StepOutcome::Failed => break StopReason::DampingLimit,
            StepOutcome::Accepted => {}
        }
        let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let decrease = current - step.loss;
        x = step.phases;
        current = step.loss;
        damping = step.damping;
        history.push(current);
        if current < options.target_loss {
            break StopReason::TargetLoss;
        }
        if decrease < options.function_tolerance * (current + decrease) {
            break StopReason::FunctionTolerance;
        }
        if step.step_norm < options.step_tolerance * (x_norm + options.step_tolerance) {
            break StopReason::StepTolerance;
        }
    };
    Descent {
        x,
        loss: current,
        iterations,
        stop,
        history,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub phases: PhaseProgram,
    /// Error norm of the returned phases, recomputed from the composed matrix.
    pub loss: f64,
    /// Iterations of the descent that produced `phases`.
    pub iterations: usize,
    /// Iterations summed over every restart.
    pub total_iterations: usize,
    pub restarts_used: usize,
    pub converged: bool,
    pub stop: StopReason,
    pub seed: u64,
}

/// Best of up to `options.restarts` independent descents; stops early at the
/// first descent that reaches `options.target_loss`. Fixed phases are never
/// touched.
pub fn fit(
    template: &InterlacedCircuit,
    target: &ComplexMatrix,
    options: &LmaOptions,
    init: &InitStrategy,
    seed: u64,
) -> Result<FitResult> {
    options.validate()?;
    init.validate(template.layers() * template.n())?;
    let mut problem = CircuitProblem::new(template, target)?;
    let plan = SeedPlan::new(seed);
    let mut best: Option<(Descent, usize)> = None;
    let mut total_iterations = 0;
    let mut restarts_used = 0;
    for restart in 0..options.restarts {
        let mut rng = rng_from_seed(plan.task_seed("restart", restart as u64));
        let x0 = init.draw(template.program(), &mut rng);
        let d = descend(&mut problem, &x0, options);
        total_iterations += d.iterations;
        restarts_used += 1;
        let done = d.loss < options.target_loss;
        if best.as_ref().is_none_or(|(b, _)| d.loss < b.loss) {
            best = Some((d, restart));
        }
        if done {
            break;
        }
    }
    let (descent, _) = best.expect("at least one restart");
    let phases = template.program().with_free_values(&descent.x)?;
    let fitted = template.with_program(phases.clone())?;
    let l = loss(&compose(&fitted), target)?;
    Ok(FitResult {
        phases,
        loss: l,
        iterations: descent.iterations,
        total_iterations,
        restarts_used,
        converged: l < options.target_loss,
        stop: descent.stop,
        seed,
    })
}

/// Second optimization against perturbed mixers: up to `attempts` truncated
/// fits from fresh initializations, returning the first that reaches the
/// target loss, else the best.
///
/// The phases already held by `perturbed` are the uncorrected ones. If they
/// reach the target loss on their own they are returned unchanged with zero
/// iterations.
pub fn recalibrate(
    perturbed: &InterlacedCircuit,
    target: &ComplexMatrix,
    options: &LmaOptions,
    attempts: usize,
    init: &InitStrategy,
    seed: u64,
) -> Result<FitResult> {
    let options = LmaOptions {
        restarts: attempts,
        ..options.clone()
    };
    options.validate()?;
    let before = loss(&compose(perturbed), target)?;
    if before < options.target_loss {
        return Ok(FitResult {
            phases: perturbed.program().clone(),
            loss: before,
            iterations: 0,
            total_iterations: 0,
            restarts_used: 0,
            converged: true,
            stop: StopReason::TargetLoss,
            seed,
        });
    }
    fit(perturbed, target, &options, init, seed)
}
