//! Interlaced circuits `U = F P_M F ... F P_1 F`.
//!
//! Indexing is zero-based throughout: mixer slot 0 is the rightmost factor
//! and acts first on an input column vector, phase layer `m` sits between
//! mixer slots `m` and `m + 1`. Flattened phase vectors are layer-major,
//! `x = (θ_0^(0), ..., θ_{N-1}^(0), θ_0^(1), ...)`.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::{dfrft, JxSpec, MixingLayer};
use crate::numerics::{frobenius_norm, matmul_into, ComplexMatrix};

/// Maps a phase into `[0, 2π)`.
pub fn canonical_phase(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PhaseSlot {
    Free,
    /// Stuck shifter held at this phase.
    Fixed(f64),
}

impl PhaseSlot {
    pub fn is_free(self) -> bool {
        matches!(self, PhaseSlot::Free)
    }
}

/// A stuck phase shifter at `(layer, port)` held at `value` radians.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fault {
    pub layer: usize,
    pub port: usize,
    pub value: f64,
}

/// `layers x ports` grid of phases with a per-entry fault mask.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseProgram {
    layers: usize,
    ports: usize,
    theta: Vec<f64>,
    mask: Vec<PhaseSlot>,
}

impl PhaseProgram {
    pub fn zeros(layers: usize, ports: usize) -> Self {
        Self {
            layers,
            ports,
            theta: vec![0.0; layers * ports],
            mask: vec![PhaseSlot::Free; layers * ports],
        }
    }

    /// All-free program from a `layers x ports` grid.
    pub fn from_grid(grid: &[Vec<f64>]) -> Result<Self> {
        let layers = grid.len();
        let ports = grid.first().map_or(0, Vec::len);
        if grid.iter().any(|row| row.len() != ports) {
            return Err(Error::dims(format!("{ports} phases per layer"), "ragged grid"));
        }
        Ok(Self {
            layers,
            ports,
            theta: grid.iter().flatten().copied().collect(),
            mask: vec![PhaseSlot::Free; layers * ports],
        })
    }

    /// Program from a flat layer-major phase vector and mask. Fixed entries
    /// take their value from the mask.
    pub fn from_parts(layers: usize, ports: usize, mut theta: Vec<f64>, mask: Vec<PhaseSlot>) -> Result<Self> {
        if theta.len() != layers * ports || mask.len() != layers * ports {
            return Err(Error::dims(
                format!("{} phases and mask entries", layers * ports),
                format!("{} / {}", theta.len(), mask.len()),
            ));
        }
        for (t, slot) in theta.iter_mut().zip(&mask) {
            if let PhaseSlot::Fixed(v) = slot {
                *t = *v;
            }
        }
        Ok(Self { layers, ports, theta, mask })
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn ports(&self) -> usize {
        self.ports
    }

    pub fn theta(&self, layer: usize, port: usize) -> f64 {
        self.theta[layer * self.ports + port]
    }

    pub fn slot(&self, layer: usize, port: usize) -> PhaseSlot {
        self.mask[layer * self.ports + port]
    }

    /// Flattened phase vector `x`, layer-major.
    pub fn as_vector(&self) -> &[f64] {
        &self.theta
    }

    pub fn mask(&self) -> &[PhaseSlot] {
        &self.mask
    }

    pub fn layer(&self, layer: usize) -> &[f64] {
        &self.theta[layer * self.ports..(layer + 1) * self.ports]
    }

    pub fn free_count(&self) -> usize {
        self.mask.iter().filter(|s| s.is_free()).count()
    }

    pub fn fault_count(&self) -> usize {
        self.mask.len() - self.free_count()
    }

    /// Flat indices of the free entries, in layer-major order.
    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.mask.len()).filter(|&i| self.mask[i].is_free()).collect()
    }

    pub fn free_values(&self) -> Vec<f64> {
        self.theta
            .iter()
            .zip(&self.mask)
            .filter(|(_, s)| s.is_free())
            .map(|(t, _)| *t)
            .collect()
    }

    /// Copy with the free entries replaced by `values`; fixed entries keep
    /// their values.
    pub fn with_free_values(&self, values: &[f64]) -> Result<Self> {
        let mut out = self.clone();
        out.set_free_values(values)?;
        Ok(out)
    }

    pub(crate) fn set_free_values(&mut self, values: &[f64]) -> Result<()> {
        let free = self.free_count();
        if values.len() != free {
            return Err(Error::dims(format!("{free} free phases"), format!("{}", values.len())));
        }
        let mut it = values.iter();
        for (t, s) in self.theta.iter_mut().zip(&self.mask) {
            if s.is_free() {
                *t = *it.next().unwrap();
            }
        }
        Ok(())
    }

    /// Phases folded into `[0, 2π)`, as a `layers x ports` grid.
    pub fn canonical_grid(&self) -> Vec<Vec<f64>> {
        (0..self.layers)
            .map(|m| self.layer(m).iter().map(|&t| canonical_phase(t)).collect())
            .collect()
    }

    /// Largest number of stuck shifters found in a single layer.
    pub fn max_faults_per_layer(&self) -> usize {
        (0..self.layers)
            .map(|m| self.mask[m * self.ports..(m + 1) * self.ports].iter().filter(|s| !s.is_free()).count())
            .max()
            .unwrap_or(0)
    }

    /// Returns a copy with the listed shifters stuck at their values.
    pub fn apply_fault_plan(&self, faults: &[Fault]) -> Result<Self> {
        let mut out = self.clone();
        let mut seen = vec![false; self.mask.len()];
        for f in faults {
            if f.layer >= self.layers || f.port >= self.ports {
                return Err(Error::FaultOutOfRange {
                    layer: f.layer,
                    port: f.port,
                    layers: self.layers,
                    ports: self.ports,
                });
            }
            if !f.value.is_finite() {
                return Err(Error::NonFinite("fault value"));
            }
            let idx = f.layer * self.ports + f.port;
            if seen[idx] {
                return Err(Error::DuplicateFault { layer: f.layer, port: f.port });
            }
            seen[idx] = true;
            out.mask[idx] = PhaseSlot::Fixed(f.value);
            out.theta[idx] = f.value;
        }
        Ok(out)
    }
}

/// Mixers plus the phase program between them.
#[derive(Clone, Debug, PartialEq)]
pub struct InterlacedCircuit {
    mixers: Vec<MixingLayer>,
    program: PhaseProgram,
}

impl InterlacedCircuit {
    pub fn new(mixers: Vec<MixingLayer>, program: PhaseProgram) -> Result<Self> {
        if mixers.len() != program.layers + 1 {
            return Err(Error::dims(
                format!("{} mixers for {} phase layers", program.layers + 1, program.layers),
                format!("{} mixers", mixers.len()),
            ));
        }
        let n = program.ports;
        if let Some(bad) = mixers.iter().find(|m| m.n() != n) {
            return Err(Error::dims(format!("{n}x{n} mixers"), format!("{0}x{0}", bad.n())));
        }
        Ok(Self { mixers, program })
    }

    /// `layers` zero-phase layers interlaced with ideal DFrFT mixers.
    pub fn ideal(spec: &JxSpec, layers: usize) -> Result<Self> {
        let f = dfrft(spec)?;
        Self::new(vec![f; layers + 1], PhaseProgram::zeros(layers, spec.n()))
    }

    pub fn mixers(&self) -> &[MixingLayer] {
        &self.mixers
    }

    pub fn program(&self) -> &PhaseProgram {
        &self.program
    }

    pub fn n(&self) -> usize {
        self.program.ports
    }

    pub fn layers(&self) -> usize {
        self.program.layers
    }

    pub fn with_program(&self, program: PhaseProgram) -> Result<Self> {
        Self::new(self.mixers.clone(), program)
    }

    pub fn with_mixers(&self, mixers: Vec<MixingLayer>) -> Result<Self> {
        Self::new(mixers, self.program.clone())
    }

    pub(crate) fn program_mut(&mut self) -> &mut PhaseProgram {
        &mut self.program
    }
}

/// Transfer matrix of the circuit.
pub fn compose(circuit: &InterlacedCircuit) -> ComplexMatrix {
    let n = circuit.n();
    let mut acc = circuit.mixers[0].matrix().clone();
    let mut tmp = ComplexMatrix::zeros(n, n);
    let mut factors = vec![Complex64::new(0.0, 0.0); n];
    for m in 0..circuit.layers() {
        for (f, &t) in factors.iter_mut().zip(circuit.program.layer(m)) {
            *f = Complex64::from_polar(1.0, t);
        }
        acc.scale_rows(&factors);
        matmul_into(circuit.mixers[m + 1].matrix(), &acc, &mut tmp);
        std::mem::swap(&mut acc, &mut tmp);
    }
    acc
}

/// Mean square error `(1/N²) ||U - U_t||_F²`.
pub fn loss(u: &ComplexMatrix, target: &ComplexMatrix) -> Result<f64> {
    let n = u.rows();
    let diff = u.sub(target)?;
    Ok(frobenius_norm(&diff).powi(2) / (n * n) as f64)
}

/// Entries of `(U - U_t)/N` as interleaved `(re, im)` pairs in row-major
/// order; `Σ r_i² = loss(U, U_t)`.
pub fn residuals(circuit: &InterlacedCircuit, target: &ComplexMatrix) -> Result<Vec<f64>> {
    check_target(circuit, target)?;
    Ok(residuals_of(&compose(circuit), target))
}

pub(crate) fn residuals_of(u: &ComplexMatrix, target: &ComplexMatrix) -> Vec<f64> {
    let inv_n = 1.0 / u.rows() as f64;
    u.as_slice()
        .iter()
        .zip(target.as_slice())
        .flat_map(|(a, b)| {
            let d = (a - b) * inv_n;
            [d.re, d.im]
        })
        .collect()
}

pub(crate) fn check_target(circuit: &InterlacedCircuit, target: &ComplexMatrix) -> Result<()> {
    let n = circuit.n();
    if target.rows() != n || target.cols() != n {
        return Err(Error::dims(format!("{n}x{n} target"), format!("{}x{}", target.rows(), target.cols())));
    }
    Ok(())
}

/// Jacobian of [`residuals`] with respect to the free phases, shape
/// `2N² x free_count`, columns in layer-major order of the free entries.
pub fn jacobian(circuit: &InterlacedCircuit, target: &ComplexMatrix) -> Result<DMatrix<f64>> {
    check_target(circuit, target)?;
    let mut ws = Workspace::new(circuit.n(), circuit.layers());
    let mut jac = DMatrix::zeros(2 * circuit.n() * circuit.n(), circuit.program.free_count());
    ws.evaluate(circuit, target, Some(&mut jac));
    Ok(jac)
}

/// Scratch buffers for repeated residual/Jacobian evaluation.
pub(crate) struct Workspace {
    n: usize,
    /// `after_phase[m] = P_m F_m P_{m-1} ... F_0`.
    after_phase: Vec<ComplexMatrix>,
    suffix: ComplexMatrix,
    scratch: ComplexMatrix,
    pub(crate) u: ComplexMatrix,
    pub(crate) residuals: Vec<f64>,
}

impl Workspace {
    pub(crate) fn new(n: usize, layers: usize) -> Self {
        Self {
            n,
            after_phase: vec![ComplexMatrix::zeros(n, n); layers],
            suffix: ComplexMatrix::zeros(n, n),
            scratch: ComplexMatrix::zeros(n, n),
            u: ComplexMatrix::zeros(n, n),
            residuals: vec![0.0; 2 * n * n],
        }
    }

    /// Fills `u` and `residuals`, and the Jacobian when requested. Returns
    /// the loss.
    ///
    /// With `U = A_m P_m B_m`, the derivative by `θ_p^(m)` is the rank-one
    /// matrix `i (A_m)_{:,p} (P_m B_m)_{p,:}`; forward products `P_m B_m`
    /// and backward products `A_m` are each built once.
    pub(crate) fn evaluate(
        &mut self,
        circuit: &InterlacedCircuit,
        target: &ComplexMatrix,
        jac: Option<&mut DMatrix<f64>>,
    ) -> f64 {
        let n = self.n;
        let layers = circuit.layers();
        let program = &circuit.program;
        let mut factors = vec![Complex64::new(0.0, 0.0); n];

        // Forward pass.
        let mut acc = circuit.mixers[0].matrix().clone();
        for m in 0..layers {
            for (f, &t) in factors.iter_mut().zip(program.layer(m)) {
                *f = Complex64::from_polar(1.0, t);
            }
            acc.scale_rows(&factors);
            self.after_phase[m].as_mut_slice().copy_from_slice(acc.as_slice());
            matmul_into(circuit.mixers[m + 1].matrix(), &self.after_phase[m], &mut acc);
        }
        self.u = acc;

        let inv_n = 1.0 / n as f64;
        let mut total = 0.0;
        for (k, (a, b)) in self.u.as_slice().iter().zip(target.as_slice()).enumerate() {
            let d = (a - b) * inv_n;
            self.residuals[2 * k] = d.re;
            self.residuals[2 * k + 1] = d.im;
            total += d.norm_sqr();
        }

        let Some(jac) = jac else { return total };

        // Backward pass: suffix = A_m, starting from A_{M-1} = F_M.
        let mut col = jac.ncols();
        self.suffix.as_mut_slice().copy_from_slice(circuit.mixers[layers].matrix().as_slice());
        for m in (0..layers).rev() {
            let c = &self.after_phase[m];
            for p in (0..n).rev() {
                if !program.slot(m, p).is_free() {
                    continue;
                }
                col -= 1;
                let mut column = jac.column_mut(col);
                for i in 0..n {
                    let a = self.suffix[(i, p)] * Complex64::new(0.0, inv_n);
                    for j in 0..n {
                        let d = a * c[(p, j)];
                        let k = i * n + j;
                        column[2 * k] = d.re;
                        column[2 * k + 1] = d.im;
                    }
                }
            }
            if m > 0 {
                // A_{m-1} = A_m P_m F_m.
                for (f, &t) in factors.iter_mut().zip(program.layer(m)) {
                    *f = Complex64::from_polar(1.0, t);
                }
                for i in 0..n {
                    for (p, f) in factors.iter().enumerate() {
                        self.suffix[(i, p)] *= f;
                    }
                }
                matmul_into(&self.suffix, circuit.mixers[m].matrix(), &mut self.scratch);
                std::mem::swap(&mut self.suffix, &mut self.scratch);
            }
        }
        debug_assert_eq!(col, 0);
        total
    }
}
