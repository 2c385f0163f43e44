//! Seeded randomness.
//!
//! Every random quantity in the crate comes from a [`ChaCha8Rng`] seeded with
//! a 64-bit task seed. Task seeds are derived from a master seed, a string
//! label and an index by [`SeedPlan::task_seed`], so each unit of work owns a
//! private stream and results do not depend on scheduling order.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::numerics::{qr_unitary, ComplexMatrix, HermitianMatrix};

/// Identity of the generator, recorded in experiment metadata.
pub const RNG_NAME: &str = "ChaCha8Rng (rand_chacha 0.9), seed_from_u64";

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function; a bijection on `u64`.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Derives per-task seeds from a master seed.
///
/// `task_seed = mix64(base + (index + 1) * GOLDEN_GAMMA)` with
/// `base = mix64(master_seed ^ mix64(fnv1a64(label)))`. For a fixed
/// `(master_seed, label)` the map from index to seed is injective because
/// `mix64` is a bijection and `GOLDEN_GAMMA` is odd.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedPlan {
    pub master_seed: u64,
}

impl SeedPlan {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn task_seed(&self, label: &str, index: u64) -> u64 {
        let base = mix64(self.master_seed ^ mix64(fnv1a64(label.as_bytes())));
        mix64(base.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
    }

    pub fn rng(&self, label: &str, index: u64) -> ChaCha8Rng {
        rng_from_seed(self.task_seed(label, index))
    }
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Haar-distributed unitary via QR of a complex Ginibre matrix with the
/// phases of R's diagonal folded into Q.
pub fn haar_unitary_with<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ComplexMatrix {
    assert!(n >= 1, "haar_unitary requires n >= 1");
    loop {
        let g = ComplexMatrix::from_fn(n, n, |_, _| complex_gaussian(rng));
        // A singular Ginibre draw has probability zero; redraw if it happens.
        if let Ok((q, _)) = qr_unitary(&g) {
            return q;
        }
    }
}

pub fn haar_unitary(n: usize, seed: u64) -> ComplexMatrix {
    haar_unitary_with(n, &mut rng_from_seed(seed))
}

/// `(A + A^H) / 2` where the real and imaginary parts of every entry of `A`
/// are independent standard normals.
pub fn gaussian_hermitian_with<R: Rng + ?Sized>(n: usize, rng: &mut R) -> HermitianMatrix {
    let a = ComplexMatrix::from_fn(n, n, |_, _| complex_gaussian(rng));
    let mut h = ComplexMatrix::zeros(n, n);
    for r in 0..n {
        h[(r, r)] = Complex64::new(a[(r, r)].re, 0.0);
        for c in r + 1..n {
            let z = (a[(r, c)] + a[(c, r)].conj()) * 0.5;
            h[(r, c)] = z;
            h[(c, r)] = z.conj();
        }
    }
    HermitianMatrix::from_matrix_unchecked(h)
}

pub fn gaussian_hermitian(n: usize, seed: u64) -> HermitianMatrix {
    gaussian_hermitian_with(n, &mut rng_from_seed(seed))
}

/// Hermitian with independent entries: every diagonal entry is a real
/// standard normal and every upper-triangular entry has independent standard
/// normal real and imaginary parts (mirrored below the diagonal).
pub fn gaussian_hermitian_entrywise_with<R: Rng + ?Sized>(n: usize, rng: &mut R) -> HermitianMatrix {
    let mut h = ComplexMatrix::zeros(n, n);
    for r in 0..n {
        h[(r, r)] = Complex64::new(rng.sample(StandardNormal), 0.0);
        for c in r + 1..n {
            let z = complex_gaussian(rng);
            h[(r, c)] = z;
            h[(c, r)] = z.conj();
        }
    }
    HermitianMatrix::from_matrix_unchecked(h)
}

/// Convention used to turn Gaussian draws into a Hermitian perturbation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HermitianEnsemble {
    /// `(A + A^H) / 2`; see [`gaussian_hermitian_with`].
    Symmetrized,
    /// Independent entries; see [`gaussian_hermitian_entrywise_with`].
    #[default]
    Entrywise,
}

impl HermitianEnsemble {
    pub fn sample_with<R: Rng + ?Sized>(self, n: usize, rng: &mut R) -> HermitianMatrix {
        match self {
            HermitianEnsemble::Symmetrized => gaussian_hermitian_with(n, rng),
            HermitianEnsemble::Entrywise => gaussian_hermitian_entrywise_with(n, rng),
        }
    }

    pub fn sample(self, n: usize, seed: u64) -> HermitianMatrix {
        self.sample_with(n, &mut rng_from_seed(seed))
    }

    pub fn name(self) -> &'static str {
        match self {
            HermitianEnsemble::Symmetrized => "symmetrized",
            HermitianEnsemble::Entrywise => "entrywise",
        }
    }
}

/// `layers x ports` grid of i.i.d. phases in `[0, 2π)`.
pub fn uniform_phases_with<R: Rng + ?Sized>(layers: usize, ports: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..layers)
        .map(|_| (0..ports).map(|_| rng.random_range(0.0..TAU)).collect())
        .collect()
}

pub fn uniform_phases(layers: usize, ports: usize, seed: u64) -> Vec<Vec<f64>> {
    uniform_phases_with(layers, ports, &mut rng_from_seed(seed))
}

/// Replaces every `x_i` by `x_i (1 + u_i)` with `u_i ~ U[-fraction, fraction]`.
pub fn jitter_phases_with<R: Rng + ?Sized>(x: &[f64], fraction: f64, rng: &mut R) -> Vec<f64> {
    assert!(fraction >= 0.0, "jitter fraction must be non-negative");
    if fraction == 0.0 {
        return x.to_vec();
    }
    x.iter()
        .map(|&v| v * (1.0 + rng.random_range(-fraction..=fraction)))
        .collect()
}

pub fn jitter_phases(x: &[f64], fraction: f64, seed: u64) -> Vec<f64> {
    jitter_phases_with(x, fraction, &mut rng_from_seed(seed))
}
