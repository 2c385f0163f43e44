//! C ABI for the `interlaced` library.
//!
//! Conventions:
//! - Every fallible call returns an [`InterlacedStatus`]; on failure a
//!   message is available from [`interlaced_last_error`] on the same thread.
//! - Complex `n x n` matrices cross the boundary as two row-major `double`
//!   arrays (real and imaginary parts) of length `n * n`.
//! - Phase vectors are layer-major, `layers * n` entries.
//! - Handles are created by `*_new*` / fit calls and released by the
//!   matching `*_free`. Passing a null handle to `*_free` is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use interlaced::circuit::{self, compose, Fault, PhaseProgram};
use interlaced::lattice::{perturbed_mixer_set, JxSpec};
use interlaced::numerics::ComplexMatrix;
use interlaced::optimizer::{self, InitStrategy, LmaOptions};
use interlaced::sampling::{haar_unitary, HermitianEnsemble};
use interlaced::Error;

/// Result codes. `Ok` is zero.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InterlacedStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NotUnitary = 4,
    NumericalFailure = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Ensemble used to draw the Hermitian perturbation of each mixer.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InterlacedEnsemble {
    /// Independent Gaussian entries above the diagonal, mirrored.
    Entrywise = 0,
    /// `(A + A^H) / 2` of a complex Gaussian matrix.
    Symmetrized = 1,
}

/// Levenberg-Marquardt settings; start from [`interlaced_options_default`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterlacedOptions {
    pub function_tolerance: f64,
    pub step_tolerance: f64,
    pub optimality_tolerance: f64,
    pub max_iterations: usize,
    pub restarts: usize,
    pub target_loss: f64,
    pub damping_initial: f64,
    pub damping_factor: f64,
    pub damping_max: f64,
}

impl From<&LmaOptions> for InterlacedOptions {
    fn from(o: &LmaOptions) -> Self {
        Self {
            function_tolerance: o.function_tolerance,
            step_tolerance: o.step_tolerance,
            optimality_tolerance: o.optimality_tolerance,
            max_iterations: o.max_iterations,
            restarts: o.restarts,
            target_loss: o.target_loss,
            damping_initial: o.damping_initial,
            damping_factor: o.damping_factor,
            damping_max: o.damping_max,
        }
    }
}

impl From<&InterlacedOptions> for LmaOptions {
    fn from(o: &InterlacedOptions) -> Self {
        Self {
            function_tolerance: o.function_tolerance,
            step_tolerance: o.step_tolerance,
            optimality_tolerance: o.optimality_tolerance,
            max_iterations: o.max_iterations,
            restarts: o.restarts,
            target_loss: o.target_loss,
            damping_initial: o.damping_initial,
            damping_factor: o.damping_factor,
            damping_max: o.damping_max,
        }
    }
}

/// Opaque circuit: mixers plus a phase program.
pub struct InterlacedCircuit {
    inner: circuit::InterlacedCircuit,
}

/// Opaque result of a fit or recalibration.
pub struct InterlacedFitResult {
    inner: optimizer::FitResult,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(InterlacedStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::DimensionMismatch { .. } => InterlacedStatus::DimensionMismatch,
            Error::NotUnitary { .. } => InterlacedStatus::NotUnitary,
            Error::NoConvergence | Error::RankDeficient { .. } | Error::NonFinite(_) | Error::ZeroNorm => {
                InterlacedStatus::NumericalFailure
            }
            _ => InterlacedStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn fail<T>(status: InterlacedStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

/// Runs `f`, converting errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> InterlacedStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            InterlacedStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("internal error: {msg}"));
            InterlacedStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(InterlacedStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return fail(InterlacedStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().map_or_else(|| fail(InterlacedStatus::NullPointer, format!("{what} is null")), Ok)
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().map_or_else(|| fail(InterlacedStatus::NullPointer, format!("{what} is null")), Ok)
}

unsafe fn read_matrix(n: usize, re: *const f64, im: *const f64) -> Result<ComplexMatrix, Failure> {
    if n == 0 {
        return fail(InterlacedStatus::InvalidArgument, "matrix dimension must be positive");
    }
    let re = slice(re, n * n, "real part")?;
    let im = slice(im, n * n, "imaginary part")?;
    let data = re.iter().zip(im).map(|(&a, &b)| num_complex::Complex64::new(a, b)).collect();
    Ok(ComplexMatrix::from_row_major(n, n, data)?)
}

unsafe fn write_matrix(m: &ComplexMatrix, re: *mut f64, im: *mut f64, len: usize) -> Result<(), Failure> {
    let need = m.rows() * m.cols();
    if len < need {
        return fail(InterlacedStatus::BufferTooSmall, format!("buffers hold {len} entries, {need} needed"));
    }
    let re = slice_mut(re, need, "real output")?;
    let im = slice_mut(im, need, "imaginary output")?;
    for ((r, i), z) in re.iter_mut().zip(im.iter_mut()).zip(m.as_slice()) {
        *r = z.re;
        *i = z.im;
    }
    Ok(())
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return fail(InterlacedStatus::NullPointer, "output handle pointer is null");
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn interlaced_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version string"),
    };
    VERSION.as_ptr()
}

/// Message describing the last failure on this thread, or an empty string.
/// The pointer stays valid until the next library call on this thread.
#[no_mangle]
pub extern "C" fn interlaced_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn interlaced_options_default() -> InterlacedOptions {
    (&LmaOptions::default()).into()
}

/// Defaults with `max_iterations = 50`, as used for recalibration.
#[no_mangle]
pub extern "C" fn interlaced_options_truncated() -> InterlacedOptions {
    (&LmaOptions::truncated()).into()
}

/// Circuit with `layers` phase layers between `layers + 1` ideal mixers and
/// all phases zero.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn interlaced_circuit_new_ideal(
    n: usize,
    layers: usize,
    kappa: f64,
    out: *mut *mut InterlacedCircuit,
) -> InterlacedStatus {
    guard(|| {
        if layers == 0 {
            return fail(InterlacedStatus::InvalidArgument, "layers must be at least 1");
        }
        let spec = JxSpec::new(n, kappa)?;
        write_out(out, InterlacedCircuit { inner: circuit::InterlacedCircuit::ideal(&spec, layers)? })
    })
}

/// Circuit whose `layers + 1` mixers are independently perturbed with
/// coupling disorder `sigma_k`, drawn from `seed`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn interlaced_circuit_new_perturbed(
    n: usize,
    layers: usize,
    kappa: f64,
    sigma_k: f64,
    ensemble: InterlacedEnsemble,
    seed: u64,
    out: *mut *mut InterlacedCircuit,
) -> InterlacedStatus {
    guard(|| {
        if layers == 0 {
            return fail(InterlacedStatus::InvalidArgument, "layers must be at least 1");
        }
        let spec = JxSpec::new(n, kappa)?;
        let ensemble = match ensemble {
            InterlacedEnsemble::Entrywise => HermitianEnsemble::Entrywise,
            InterlacedEnsemble::Symmetrized => HermitianEnsemble::Symmetrized,
        };
        let mixers = perturbed_mixer_set(&spec, layers + 1, sigma_k, ensemble, seed)?;
        let inner = circuit::InterlacedCircuit::new(mixers, PhaseProgram::zeros(layers, n))?;
        write_out(out, InterlacedCircuit { inner })
    })
}

/// # Safety
/// `circuit` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn interlaced_circuit_free(circuit: *mut InterlacedCircuit) {
    if !circuit.is_null() {
        drop(Box::from_raw(circuit));
    }
}

/// # Safety
/// `circuit` must be a live handle; `n` and `layers` may be null.
#[no_mangle]
pub unsafe extern "C" fn interlaced_circuit_dims(
    circuit: *const InterlacedCircuit,
    n: *mut usize,
    layers: *mut usize,
) -> InterlacedStatus {
    guard(|| {
        let c = handle(circuit, "circuit")?;
        if let Some(n) = n.as_mut() {
            *n = c.inner.n();
        }
        if let Some(l) = layers.as_mut() {
            *l = c.inner.layers();
        }
        Ok(())
    })
}

/// Sets all `layers * n` phases. Entries at stuck shifters are ignored.
///
/// # Safety
/// `circuit` must be a live handle and `theta` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn interlaced_circuit_set_phases(
    circuit: *mut InterlacedCircuit,
    theta: *const f64,
    len: usize,
) -> InterlacedStatus {
    guard(|| {
        let c = handle_mut(circuit, "circuit")?;
        let theta = slice(theta, len, "theta")?;
        let p = c.inner.program();
        let program = PhaseProgram::from_parts(p.layers(), p.ports(), theta.to_vec(), p.mask().to_vec())?;
        c.inner = c.inner.with_program(program)?;
        Ok(())
    })
}

/// Copies the `layers * n` phases into `theta`.
///
/// # Safety
/// `circuit` must be a live handle and `theta` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn interlaced_circuit_get_phases(
    circuit: *const InterlacedCircuit,
    theta: *mut f64,
    len: usize,
) -> InterlacedStatus {
    guard(|| {
        let c = handle(circuit, "circuit")?;
        let x = c.inner.program().as_vector();
        if len < x.len() {
            return fail(InterlacedStatus::BufferTooSmall, format!("buffer holds {len} phases, {} needed", x.len()));
        }
        slice_mut(theta, x.len(), "theta")?.copy_from_slice(x);
        Ok(())
    })
}

/// Freezes `count` shifters: shifter `i` sits at zero-based `(layers[i],
/// ports[i])` and is stuck at `values[i]` radians.
///
/// # Safety
/// `circuit` must be a live handle and the three arrays must hold `count`
/// entries each.
#[no_mangle]
pub unsafe extern "C" fn interlaced_circuit_apply_faults(
    circuit: *mut InterlacedCircuit,
    layers: *const usize,
    ports: *const usize,
    values: *const f64,
    count: usize,
) -> InterlacedStatus {
    guard(|| {
        let c = handle_mut(circuit, "circuit")?;
        let (l, p, v) = (slice(layers, count, "layers")?, slice(ports, count, "ports")?, slice(values, count, "values")?);
        let faults: Vec<Fault> = (0..count).map(|i| Fault { layer: l[i], port: p[i], value: v[i] }).collect();
        let program = c.inner.program().apply_fault_plan(&faults)?;
        c.inner = c.inner.with_program(program)?;
        Ok(())
    })
}

/// Number of free (not stuck) phases.
///
/// # Safety
/// `circuit` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn interlaced_circuit_free_count(circuit: *const InterlacedCircuit, out: *mut usize) -> InterlacedStatus {
    guard(|| {
        let c = handle(circuit, "circuit")?;
        *handle_mut(out, "out")? = c.inner.program().free_count();
        Ok(())
    })
}

/// Writes the composed unitary into `re` / `im` (each at least `n * n`).
///
/// # Safety
/// `circuit` must be a live handle and both buffers must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn interlaced_circuit_compose(
    circuit: *const InterlacedCircuit,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> InterlacedStatus {
    guard(|| write_matrix(&compose(&handle(circuit, "circuit")?.inner), re, im, len))
}

/// Haar-random `n x n` unitary drawn from `seed`.
///
/// # Safety
/// Both buffers must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn interlaced_haar_unitary(n: usize, seed: u64, re: *mut f64, im: *mut f64, len: usize) -> InterlacedStatus {
    guard(|| {
        if n == 0 {
            return fail(InterlacedStatus::InvalidArgument, "n must be positive");
        }
        write_matrix(&haar_unitary(n, seed), re, im, len)
    })
}

/// `||U - T||_F^2 / n^2`.
///
/// # Safety
/// The four input arrays must hold `n * n` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn interlaced_loss(
    n: usize,
    u_re: *const f64,
    u_im: *const f64,
    t_re: *const f64,
    t_im: *const f64,
    out: *mut f64,
) -> InterlacedStatus {
    guard(|| {
        let u = read_matrix(n, u_re, u_im)?;
        let t = read_matrix(n, t_re, t_im)?;
        *handle_mut(out, "out")? = circuit::loss(&u, &t)?;
        Ok(())
    })
}

unsafe fn options_or_default(options: *const InterlacedOptions) -> LmaOptions {
    options.as_ref().map_or_else(LmaOptions::default, LmaOptions::from)
}

/// Fits the free phases of `circuit` to the target with random restarts.
/// The circuit itself is not modified; see
/// [`interlaced_fit_result_apply`]. `options` may be null for defaults.
///
/// # Safety
/// `circuit` must be a live handle, the target arrays must hold `n * n`
/// doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn interlaced_fit(
    circuit: *const InterlacedCircuit,
    target_re: *const f64,
    target_im: *const f64,
    n: usize,
    options: *const InterlacedOptions,
    seed: u64,
    out: *mut *mut InterlacedFitResult,
) -> InterlacedStatus {
    guard(|| {
        let c = handle(circuit, "circuit")?;
        let t = read_matrix(n, target_re, target_im)?;
        let res = optimizer::fit(&c.inner, &t, &options_or_default(options), &InitStrategy::RandomUniform, seed)?;
        write_out(out, InterlacedFitResult { inner: res })
    })
}

/// Second optimization: up to `attempts` fits from fresh random phases
/// against the (perturbed) mixers of `circuit`, whose current phases are
/// taken as the uncorrected ones. `options` may be null for the truncated
/// defaults.
///
/// # Safety
/// As for [`interlaced_fit`].
#[no_mangle]
pub unsafe extern "C" fn interlaced_recalibrate(
    circuit: *const InterlacedCircuit,
    target_re: *const f64,
    target_im: *const f64,
    n: usize,
    options: *const InterlacedOptions,
    attempts: usize,
    seed: u64,
    out: *mut *mut InterlacedFitResult,
) -> InterlacedStatus {
    guard(|| {
        let c = handle(circuit, "circuit")?;
        let t = read_matrix(n, target_re, target_im)?;
        let opts = options.as_ref().map_or_else(LmaOptions::truncated, LmaOptions::from);
        let res = optimizer::recalibrate(&c.inner, &t, &opts, attempts, &InitStrategy::RandomUniform, seed)?;
        write_out(out, InterlacedFitResult { inner: res })
    })
}

/// # Safety
/// `result` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn interlaced_fit_result_free(result: *mut InterlacedFitResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Final loss, or NaN for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn interlaced_fit_result_loss(result: *const InterlacedFitResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.inner.loss)
}

/// Whether the loss reached the target loss.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn interlaced_fit_result_converged(result: *const InterlacedFitResult) -> bool {
    result.as_ref().is_some_and(|r| r.inner.converged)
}

/// Iterations summed over all restarts; zero for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn interlaced_fit_result_iterations(result: *const InterlacedFitResult) -> usize {
    result.as_ref().map_or(0, |r| r.inner.total_iterations)
}

/// Restarts (or attempts) actually run; zero for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn interlaced_fit_result_restarts_used(result: *const InterlacedFitResult) -> usize {
    result.as_ref().map_or(0, |r| r.inner.restarts_used)
}

/// Copies the fitted `layers * n` phases into `theta`.
///
/// # Safety
/// `result` must be a live handle and `theta` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn interlaced_fit_result_phases(
    result: *const InterlacedFitResult,
    theta: *mut f64,
    len: usize,
) -> InterlacedStatus {
    guard(|| {
        let x = handle(result, "result")?.inner.phases.as_vector();
        if len < x.len() {
            return fail(InterlacedStatus::BufferTooSmall, format!("buffer holds {len} phases, {} needed", x.len()));
        }
        slice_mut(theta, x.len(), "theta")?.copy_from_slice(x);
        Ok(())
    })
}

/// Installs the fitted phases (and their mask) into `circuit`.
///
/// # Safety
/// Both handles must be live.
#[no_mangle]
pub unsafe extern "C" fn interlaced_fit_result_apply(
    result: *const InterlacedFitResult,
    circuit: *mut InterlacedCircuit,
) -> InterlacedStatus {
    guard(|| {
        let r = handle(result, "result")?;
        let c = handle_mut(circuit, "circuit")?;
        c.inner = c.inner.with_program(r.inner.phases.clone())?;
        Ok(())
    })
}
