//! Randomized invariants over small circuits.

use std::f64::consts::TAU;

use interlaced::circuit::{canonical_phase, compose, jacobian, loss, residuals, Fault, InterlacedCircuit, PhaseProgram};
use interlaced::experiments::{format_fault_plan, parse_fault_plan, phase_difference_stats};
use interlaced::lattice::{perturbed_mixer_set, JxSpec};
use interlaced::numerics::{frobenius_norm, ComplexMatrix};
use interlaced::sampling::{haar_unitary, HermitianEnsemble};
use num_complex::Complex64;
use proptest::prelude::*;

fn circuit_strategy() -> impl Strategy<Value = (InterlacedCircuit, ComplexMatrix)> {
    (1usize..=5, 1usize..=6, any::<u64>(), 0.0..0.01f64).prop_flat_map(|(n, m, seed, sigma)| {
        prop::collection::vec(0.0..TAU, n * m).prop_map(move |theta| {
            let spec = JxSpec::canonical(n).unwrap();
            let mixers = perturbed_mixer_set(&spec, m + 1, sigma, HermitianEnsemble::Entrywise, seed).unwrap();
            let grid: Vec<Vec<f64>> = theta.chunks(n).map(<[f64]>::to_vec).collect();
            let c = InterlacedCircuit::new(mixers, PhaseProgram::from_grid(&grid).unwrap()).unwrap();
            (c, haar_unitary(n, seed.wrapping_add(1)))
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn composed_circuit_is_unitary((c, _) in circuit_strategy()) {
        prop_assert!(compose(&c).unitarity_defect() < 1e-11);
    }

    #[test]
    fn residual_norm_equals_loss((c, t) in circuit_strategy()) {
        let r = residuals(&c, &t).unwrap();
        let l = loss(&compose(&c), &t).unwrap();
        prop_assert!((r.iter().map(|x| x * x).sum::<f64>() - l).abs() < 1e-14);
        // Two unitaries differ by at most 2 in every singular value.
        prop_assert!(l <= 4.0 / c.n() as f64 + 1e-12);
    }

    #[test]
    fn shifting_phases_by_2pi_changes_nothing((c, t) in circuit_strategy()) {
        let x: Vec<f64> = c.program().free_values().iter().map(|v| v + TAU).collect();
        let shifted = c.with_program(c.program().with_free_values(&x).unwrap()).unwrap();
        prop_assert!(frobenius_norm(&compose(&shifted).sub(&compose(&c)).unwrap()) < 1e-12);
        prop_assert!((loss(&compose(&shifted), &t).unwrap() - loss(&compose(&c), &t).unwrap()).abs() < 1e-13);
    }

    #[test]
    fn common_layer_phase_is_a_global_phase((c, _) in circuit_strategy(), layer_pick in any::<usize>(), a in 0.0..TAU) {
        // Adding a to every phase of one layer multiplies the output by e^{ia}.
        let layer = layer_pick % c.layers();
        let n = c.n();
        let mut x = c.program().as_vector().to_vec();
        for v in &mut x[layer * n..(layer + 1) * n] {
            *v += a;
        }
        let shifted = c.with_program(c.program().with_free_values(&x).unwrap()).unwrap();
        let want = compose(&c).scale(Complex64::from_polar(1.0, a));
        prop_assert!(frobenius_norm(&compose(&shifted).sub(&want).unwrap()) < 1e-12);
    }

    #[test]
    fn jacobian_has_one_column_per_free_phase((c, t) in circuit_strategy(), port in 0usize..5, value in 0.0..TAU) {
        let f = Fault { layer: 0, port: port % c.n(), value };
        let faulty = c.with_program(c.program().apply_fault_plan(&[f]).unwrap()).unwrap();
        let j = jacobian(&faulty, &t).unwrap();
        prop_assert_eq!(j.ncols(), c.n() * c.layers() - 1);
        prop_assert_eq!(j.nrows(), 2 * c.n() * c.n());
    }

    #[test]
    fn canonical_phase_is_in_range_and_congruent(theta in -1e4..1e4f64) {
        let c = canonical_phase(theta);
        prop_assert!((0.0..TAU).contains(&c));
        let k = ((theta - c) / TAU).round();
        prop_assert!((theta - c - k * TAU).abs() < 1e-9);
    }

    #[test]
    fn fault_plans_round_trip(entries in prop::collection::btree_map((0usize..6, 0usize..6), 0.0..TAU, 0..8)) {
        let faults: Vec<Fault> = entries.iter().map(|(&(layer, port), &value)| Fault { layer, port, value }).collect();
        let text = format_fault_plan(&faults);
        prop_assert_eq!(parse_fault_plan(&text).unwrap(), faults);
    }

    #[test]
    fn phase_differences_are_shift_invariant(x in prop::collection::vec(0.0..TAU, 2..30), shift in -3.0..3.0f64) {
        let y: Vec<f64> = x.iter().map(|v| v + shift).collect();
        let (mu, sd) = phase_difference_stats(&x, &y);
        prop_assert!(sd < 1e-9);
        prop_assert!((mu + shift).abs() < 1e-9);
    }
}
