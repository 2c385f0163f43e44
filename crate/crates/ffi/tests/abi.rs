use std::ffi::CStr;
use std::ptr;

use interlaced_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(interlaced_last_error()) }.to_string_lossy().into_owned()
}

fn haar(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let (mut re, mut im) = (vec![0.0; n * n], vec![0.0; n * n]);
    assert_eq!(unsafe { interlaced_haar_unitary(n, seed, re.as_mut_ptr(), im.as_mut_ptr(), n * n) }, InterlacedStatus::Ok);
    (re, im)
}

fn ideal(n: usize, layers: usize) -> *mut InterlacedCircuit {
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { interlaced_circuit_new_ideal(n, layers, 1.0, &mut c) }, InterlacedStatus::Ok);
    c
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(interlaced_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn fit_then_compose_reproduces_target() {
    let n = 4;
    let (tre, tim) = haar(n, 11);
    let c = ideal(n, n + 1);
    let mut res = ptr::null_mut();
    let st = unsafe { interlaced_fit(c, tre.as_ptr(), tim.as_ptr(), n, ptr::null(), 3, &mut res) };
    assert_eq!(st, InterlacedStatus::Ok, "{}", last_error());
    unsafe {
        assert!(interlaced_fit_result_converged(res));
        assert!(interlaced_fit_result_loss(res) < 1e-10);
        assert!(interlaced_fit_result_restarts_used(res) >= 1);
        assert_eq!(interlaced_fit_result_apply(res, c), InterlacedStatus::Ok);
    }
    let (mut ure, mut uim) = (vec![0.0; n * n], vec![0.0; n * n]);
    let mut l = f64::NAN;
    unsafe {
        assert_eq!(interlaced_circuit_compose(c, ure.as_mut_ptr(), uim.as_mut_ptr(), n * n), InterlacedStatus::Ok);
        assert_eq!(interlaced_loss(n, ure.as_ptr(), uim.as_ptr(), tre.as_ptr(), tim.as_ptr(), &mut l), InterlacedStatus::Ok);
        assert!((l - interlaced_fit_result_loss(res)).abs() < 1e-14);
        let mut theta = vec![0.0; n * (n + 1)];
        assert_eq!(interlaced_fit_result_phases(res, theta.as_mut_ptr(), theta.len()), InterlacedStatus::Ok);
        let mut back = vec![0.0; theta.len()];
        assert_eq!(interlaced_circuit_get_phases(c, back.as_mut_ptr(), back.len()), InterlacedStatus::Ok);
        assert_eq!(theta, back);
        interlaced_fit_result_free(res);
        interlaced_circuit_free(c);
    }
}

#[test]
fn faults_stay_fixed_through_a_fit() {
    let n = 3;
    let c = ideal(n, n + 1);
    let (layers, ports, values) = ([0usize, 2], [1usize, 0], [0.7, 2.5]);
    unsafe {
        assert_eq!(interlaced_circuit_apply_faults(c, layers.as_ptr(), ports.as_ptr(), values.as_ptr(), 2), InterlacedStatus::Ok);
        let mut free = 0;
        assert_eq!(interlaced_circuit_free_count(c, &mut free), InterlacedStatus::Ok);
        assert_eq!(free, n * (n + 1) - 2);
    }
    let (tre, tim) = haar(n, 5);
    let mut res = ptr::null_mut();
    let mut opts = interlaced_options_default();
    opts.restarts = 5;
    unsafe {
        assert_eq!(interlaced_fit(c, tre.as_ptr(), tim.as_ptr(), n, &opts, 1, &mut res), InterlacedStatus::Ok);
        let mut theta = vec![0.0; n * (n + 1)];
        interlaced_fit_result_phases(res, theta.as_mut_ptr(), theta.len());
        assert_eq!(theta[1], 0.7);
        assert_eq!(theta[2 * n], 2.5);
        interlaced_fit_result_free(res);
        interlaced_circuit_free(c);
    }
}

#[test]
fn recalibration_recovers_perturbed_circuit() {
    let n = 4;
    let (tre, tim) = haar(n, 2);
    let c = ideal(n, n + 1);
    let mut fit = ptr::null_mut();
    let mut p = ptr::null_mut();
    unsafe {
        assert_eq!(interlaced_fit(c, tre.as_ptr(), tim.as_ptr(), n, ptr::null(), 1, &mut fit), InterlacedStatus::Ok);
        assert_eq!(
            interlaced_circuit_new_perturbed(n, n + 1, 1.0, 0.006, InterlacedEnsemble::Entrywise, 9, &mut p),
            InterlacedStatus::Ok
        );
        assert_eq!(interlaced_fit_result_apply(fit, p), InterlacedStatus::Ok);
        let (mut ure, mut uim) = (vec![0.0; n * n], vec![0.0; n * n]);
        interlaced_circuit_compose(p, ure.as_mut_ptr(), uim.as_mut_ptr(), n * n);
        let mut before = 0.0;
        interlaced_loss(n, ure.as_ptr(), uim.as_ptr(), tre.as_ptr(), tim.as_ptr(), &mut before);
        assert!(before > 1e-6);
        let mut rec = ptr::null_mut();
        assert_eq!(interlaced_recalibrate(p, tre.as_ptr(), tim.as_ptr(), n, ptr::null(), 10, 4, &mut rec), InterlacedStatus::Ok);
        assert!(interlaced_fit_result_loss(rec) < 1e-10);
        interlaced_fit_result_free(rec);
        interlaced_fit_result_free(fit);
        interlaced_circuit_free(p);
        interlaced_circuit_free(c);
    }
}

#[test]
fn errors_set_status_and_message() {
    let mut c = ptr::null_mut();
    unsafe {
        assert_eq!(interlaced_circuit_new_ideal(0, 1, 1.0, &mut c), InterlacedStatus::InvalidArgument);
        assert!(!last_error().is_empty());
        assert_eq!(interlaced_circuit_new_ideal(2, 1, 1.0, ptr::null_mut()), InterlacedStatus::NullPointer);
        assert_eq!(interlaced_circuit_compose(ptr::null(), ptr::null_mut(), ptr::null_mut(), 0), InterlacedStatus::NullPointer);

        let c = ideal(2, 2);
        let mut small = [0.0; 3];
        assert_eq!(interlaced_circuit_compose(c, small.as_mut_ptr(), small.as_mut_ptr(), 3), InterlacedStatus::BufferTooSmall);
        let (l, p, v) = ([0usize, 0], [1usize, 1], [0.0, 1.0]);
        assert_eq!(interlaced_circuit_apply_faults(c, l.as_ptr(), p.as_ptr(), v.as_ptr(), 2), InterlacedStatus::InvalidArgument);
        assert!(last_error().contains("1"), "{}", last_error());
        let theta = [0.0; 3];
        assert_eq!(interlaced_circuit_set_phases(c, theta.as_ptr(), 3), InterlacedStatus::DimensionMismatch);
        let mut opts = interlaced_options_default();
        opts.restarts = 0;
        let (tre, tim) = haar(2, 1);
        let mut res = ptr::null_mut();
        assert_eq!(interlaced_fit(c, tre.as_ptr(), tim.as_ptr(), 2, &opts, 0, &mut res), InterlacedStatus::InvalidArgument);
        assert!(res.is_null());
        let theta = [0.5; 4];
        assert_eq!(interlaced_circuit_set_phases(c, theta.as_ptr(), 4), InterlacedStatus::Ok);
        assert!(last_error().is_empty());
        interlaced_circuit_free(c);
        interlaced_circuit_free(ptr::null_mut());
        interlaced_fit_result_free(ptr::null_mut());
    }
}

#[test]
fn option_defaults_round_trip() {
    let d = interlaced_options_default();
    assert_eq!(d.max_iterations, 400);
    assert_eq!(d.restarts, 100);
    assert_eq!(d.target_loss, 1e-10);
    assert_eq!(interlaced_options_truncated().max_iterations, 50);
}
