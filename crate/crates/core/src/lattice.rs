//! Jx photonic lattice: Hamiltonian, DFrFT propagator and perturbed mixers.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::{expm_i_scaled, frobenius_norm, ComplexMatrix, HermitianMatrix};

/// Normalized lattice length at which the Jx propagator is the DFrFT.
pub const DFRFT_LENGTH: f64 = FRAC_PI_2;

/// Port count and coupling scale of a Jx lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct JxSpec {
    n: usize,
    kappa: f64,
    hopping: Vec<f64>,
}

impl JxSpec {
    /// Hopping rates are `κ_p = (κ/2) √((N - p) p)` for `p = 1..N-1`.
    pub fn new(n: usize, kappa: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("lattice needs at least one port".into()));
        }
        if !kappa.is_finite() {
            return Err(Error::NonFinite("coupling scale"));
        }
        let hopping = (1..n).map(|p| 0.5 * kappa * (((n - p) * p) as f64).sqrt()).collect();
        Ok(Self { n, kappa, hopping })
    }

    /// Canonical lattice with `κ = 1`.
    pub fn canonical(n: usize) -> Result<Self> {
        Self::new(n, 1.0)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// `hopping()[p - 1]` is `κ_p`.
    pub fn hopping(&self) -> &[f64] {
        &self.hopping
    }

    /// Largest coupling; zero for a single-port lattice.
    pub fn kappa_max(&self) -> f64 {
        self.hopping.iter().copied().fold(0.0, f64::max)
    }
}

/// Real symmetric tridiagonal Hamiltonian with zero diagonal and the
/// hopping rates on the off-diagonals.
pub fn build_jx_hamiltonian(spec: &JxSpec) -> HermitianMatrix {
    let n = spec.n;
    let mut h = ComplexMatrix::zeros(n, n);
    for (p, &k) in spec.hopping.iter().enumerate() {
        h[(p, p + 1)] = Complex64::new(k, 0.0);
        h[(p + 1, p)] = Complex64::new(k, 0.0);
    }
    HermitianMatrix::from_matrix_unchecked(h)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Provenance {
    Ideal,
    /// `seed` is the seed of the perturbation draw when it was generated
    /// inside this crate.
    Perturbed { sigma_k: f64, seed: Option<u64> },
}

/// One fixed unitary mixing slot of an interlaced circuit.
#[derive(Clone, Debug, PartialEq)]
pub struct MixingLayer {
    matrix: ComplexMatrix,
    provenance: Provenance,
}

impl MixingLayer {
    /// Wraps an arbitrary unitary. Fails if `||U^H U - I||_F > 1e-10`.
    pub fn from_unitary(matrix: ComplexMatrix, provenance: Provenance) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::dims("square matrix", format!("{}x{}", matrix.rows(), matrix.cols())));
        }
        let deviation = matrix.unitarity_defect();
        if deviation > 1e-10 {
            return Err(Error::NotUnitary { deviation });
        }
        Ok(Self { matrix, provenance })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn n(&self) -> usize {
        self.matrix.rows()
    }
}

/// `F = exp(i (π/2) H)`.
pub fn dfrft(spec: &JxSpec) -> Result<MixingLayer> {
    let matrix = expm_i_scaled(&build_jx_hamiltonian(spec), DFRFT_LENGTH)?;
    Ok(MixingLayer { matrix, provenance: Provenance::Ideal })
}

/// `H_p = H + σ_k κ_max H_1`.
pub fn perturb_hamiltonian(spec: &JxSpec, sigma_k: f64, h1: &HermitianMatrix) -> Result<HermitianMatrix> {
    if !(sigma_k >= 0.0) || !sigma_k.is_finite() {
        return Err(Error::InvalidArgument(format!("sigma_k must be finite and >= 0, got {sigma_k}")));
    }
    if h1.dim() != spec.n {
        return Err(Error::dims(format!("{0}x{0} perturbation", spec.n), format!("{0}x{0}", h1.dim())));
    }
    build_jx_hamiltonian(spec).add_scaled(sigma_k * spec.kappa_max(), h1)
}

/// `F_p = exp(i (π/2) H_p)`; unitary for any Hermitian perturbation.
pub fn perturbed_mixer(spec: &JxSpec, sigma_k: f64, h1: &HermitianMatrix) -> Result<MixingLayer> {
    let hp = perturb_hamiltonian(spec, sigma_k, h1)?;
    let matrix = expm_i_scaled(&hp, DFRFT_LENGTH)?;
    Ok(MixingLayer {
        matrix,
        provenance: Provenance::Perturbed { sigma_k, seed: None },
    })
}

/// Perturbed mixer whose `H_1` is drawn from `seed` with the given ensemble.
pub fn perturbed_mixer_seeded(
    spec: &JxSpec,
    sigma_k: f64,
    ensemble: crate::sampling::HermitianEnsemble,
    seed: u64,
) -> Result<MixingLayer> {
    let h1 = ensemble.sample(spec.n, seed);
    let mut layer = perturbed_mixer(spec, sigma_k, &h1)?;
    layer.provenance = Provenance::Perturbed { sigma_k, seed: Some(seed) };
    Ok(layer)
}

/// `count` independently perturbed mixers. Slot `i` draws its `H_1` from
/// `SeedPlan::new(seed).task_seed("mixer", i)`.
pub fn perturbed_mixer_set(
    spec: &JxSpec,
    count: usize,
    sigma_k: f64,
    ensemble: crate::sampling::HermitianEnsemble,
    seed: u64,
) -> Result<Vec<MixingLayer>> {
    let plan = crate::sampling::SeedPlan::new(seed);
    (0..count)
        .map(|slot| perturbed_mixer_seeded(spec, sigma_k, ensemble, plan.task_seed("mixer", slot as u64)))
        .collect()
}

/// `||A - B||_F / ||A||_F`.
pub fn relative_deviation(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    let diff = a.sub(b)?;
    let denom = frobenius_norm(a);
    if denom == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(frobenius_norm(&diff) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::eig_hermitian;
    use crate::sampling::{gaussian_hermitian, HermitianEnsemble};
    use std::f64::consts::FRAC_1_SQRT_2;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn power(m: &ComplexMatrix, k: usize) -> ComplexMatrix {
        let mut out = ComplexMatrix::identity(m.rows());
        for _ in 0..k {
            out = out.matmul(m).unwrap();
        }
        out
    }

    #[test]
    fn zero_ports_rejected() {
        assert!(JxSpec::new(0, 1.0).is_err());
    }

    #[test]
    fn small_hamiltonians() {
        let h1 = build_jx_hamiltonian(&JxSpec::canonical(1).unwrap());
        assert_eq!(h1.as_matrix()[(0, 0)], c(0.0, 0.0));

        let h2 = build_jx_hamiltonian(&JxSpec::canonical(2).unwrap());
        assert_eq!(h2.as_matrix()[(0, 1)], c(0.5, 0.0));
        assert_eq!(h2.as_matrix()[(1, 0)], c(0.5, 0.0));
        assert_eq!(h2.as_matrix()[(0, 0)], c(0.0, 0.0));

        let spec = JxSpec::canonical(4).unwrap();
        let want = [0.866_025_403_784_438_6, 1.0, 0.866_025_403_784_438_6];
        for (got, want) in spec.hopping().iter().zip(want) {
            assert!((got - want).abs() < 1e-15);
        }
        let h4 = build_jx_hamiltonian(&spec);
        for p in 0..3 {
            assert_eq!(h4.as_matrix()[(p, p + 1)].re, spec.hopping()[p]);
        }
    }

    #[test]
    fn hopping_is_mirror_symmetric() {
        for n in 1..=32 {
            let spec = JxSpec::new(n, 1.7).unwrap();
            let h = spec.hopping();
            for p in 0..h.len() {
                assert_eq!(h[p], h[h.len() - 1 - p]);
            }
        }
    }

    #[test]
    fn spectrum_is_equidistant() {
        for n in 1..=16 {
            let e = eig_hermitian(&build_jx_hamiltonian(&JxSpec::canonical(n).unwrap())).unwrap();
            for (j, l) in e.eigenvalues.iter().enumerate() {
                let want = j as f64 - (n as f64 - 1.0) / 2.0;
                assert!((l - want).abs() < 1e-10, "N={n} j={j}: {l}");
            }
        }
    }

    #[test]
    fn dfrft_two_ports_closed_form() {
        let f = dfrft(&JxSpec::canonical(2).unwrap()).unwrap();
        let s = FRAC_1_SQRT_2;
        let want = ComplexMatrix::from_row_major(2, 2, vec![c(s, 0.0), c(0.0, s), c(0.0, s), c(s, 0.0)]).unwrap();
        assert!(frobenius_norm(&f.matrix().sub(&want).unwrap()) < 1e-14);
        assert_eq!(f.provenance(), Provenance::Ideal);
    }

    #[test]
    fn dfrft_fourth_power() {
        for n in 2..=16 {
            let f = dfrft(&JxSpec::canonical(n).unwrap()).unwrap();
            assert!(f.matrix().unitarity_defect() < 1e-12);
            let sign = if (n - 1) % 2 == 0 { 1.0 } else { -1.0 };
            let want = ComplexMatrix::identity(n).scale(c(sign, 0.0));
            let err = frobenius_norm(&power(f.matrix(), 4).sub(&want).unwrap());
            assert!(err < 1e-10, "N={n}: {err}");
        }
    }

    #[test]
    fn perturbation_arithmetic() {
        let spec = JxSpec::canonical(2).unwrap();
        let hp = perturb_hamiltonian(&spec, 1.0, &HermitianMatrix::identity(2)).unwrap();
        for r in 0..2 {
            for col in 0..2 {
                assert_eq!(hp.as_matrix()[(r, col)], c(0.5, 0.0));
            }
        }
        let h1 = gaussian_hermitian(2, 1);
        assert_eq!(perturb_hamiltonian(&spec, 0.0, &h1).unwrap(), build_jx_hamiltonian(&spec));
        assert!(perturb_hamiltonian(&spec, 0.1, &HermitianMatrix::identity(3)).is_err());
        assert!(perturb_hamiltonian(&spec, -0.1, &h1).is_err());
    }

    #[test]
    fn zero_sigma_mixer_equals_dfrft() {
        let spec = JxSpec::canonical(6).unwrap();
        let f = dfrft(&spec).unwrap();
        let fp = perturbed_mixer(&spec, 0.0, &gaussian_hermitian(6, 3)).unwrap();
        assert_eq!(fp.matrix(), f.matrix());
    }

    #[test]
    fn perturbed_mixers_are_unitary() {
        let spec = JxSpec::canonical(8).unwrap();
        for (i, s) in [1e-4, 1e-3, 1e-2, 0.1].into_iter().enumerate() {
            let fp = perturbed_mixer_seeded(&spec, s, HermitianEnsemble::Symmetrized, i as u64).unwrap();
            assert!(fp.matrix().unitarity_defect() < 1e-12);
            assert!(matches!(fp.provenance(), Provenance::Perturbed { seed: Some(_), .. }));
        }
    }

    #[test]
    fn first_order_deviation_for_commuting_perturbation() {
        // H_1 = I commutes with H, so F_p = e^{i π σ / 2} F exactly and the
        // deviation is |1 - e^{i π σ/2}| ||I||_F.
        let spec = JxSpec::canonical(4).unwrap();
        let sigma_k = 1e-6;
        let sigma = sigma_k * spec.kappa_max();
        let f = dfrft(&spec).unwrap();
        let fp = perturbed_mixer(&spec, sigma_k, &HermitianMatrix::identity(4)).unwrap();
        let got = frobenius_norm(&f.matrix().sub(fp.matrix()).unwrap());
        let first_order = FRAC_PI_2 * sigma * 2.0;
        assert!((got / first_order - 1.0).abs() < 1e-5, "{got} vs {first_order}");
    }

    #[test]
    fn first_order_deviation_is_bounded_for_generic_perturbation() {
        let spec = JxSpec::canonical(6).unwrap();
        let sigma_k = 1e-6;
        let f = dfrft(&spec).unwrap();
        for seed in 0..20 {
            let h1 = gaussian_hermitian(6, seed);
            let fp = perturbed_mixer(&spec, sigma_k, &h1).unwrap();
            let got = frobenius_norm(&f.matrix().sub(fp.matrix()).unwrap());
            let bound = FRAC_PI_2 * sigma_k * spec.kappa_max() * frobenius_norm(h1.as_matrix());
            assert!(got <= bound * (1.0 + 1e-4));
            assert!(got > 0.3 * bound);
        }
    }

    #[test]
    fn relative_deviation_examples() {
        let f = dfrft(&JxSpec::canonical(3).unwrap()).unwrap();
        assert_eq!(relative_deviation(f.matrix(), f.matrix()).unwrap(), 0.0);
        let i2 = ComplexMatrix::identity(2);
        let d = relative_deviation(&i2, &i2.scale(c(-1.0, 0.0))).unwrap();
        assert!((d - 2.0).abs() < 1e-15);
        assert_eq!(relative_deviation(&ComplexMatrix::zeros(2, 2), &i2), Err(Error::ZeroNorm));
        assert!(relative_deviation(&i2, &ComplexMatrix::identity(3)).is_err());
    }

    #[test]
    fn deviation_is_linear_in_sigma() {
        let spec = JxSpec::canonical(8).unwrap();
        let f = dfrft(&spec).unwrap();
        for sigma_k in [1e-3, 5e-3] {
            let (mut one, mut two) = (0.0, 0.0);
            for seed in 0..200 {
                let h1 = gaussian_hermitian(8, seed);
                one += relative_deviation(f.matrix(), perturbed_mixer(&spec, sigma_k, &h1).unwrap().matrix()).unwrap();
                two += relative_deviation(f.matrix(), perturbed_mixer(&spec, 2.0 * sigma_k, &h1).unwrap().matrix()).unwrap();
            }
            let ratio = two / one;
            assert!((ratio / 2.0 - 1.0).abs() < 0.05, "sigma_k={sigma_k}: {ratio}");
        }
    }

    #[test]
    fn non_unitary_layer_rejected() {
        let m = ComplexMatrix::identity(3).scale(c(1.1, 0.0));
        assert!(matches!(MixingLayer::from_unitary(m, Provenance::Ideal), Err(Error::NotUnitary { .. })));
    }
}
