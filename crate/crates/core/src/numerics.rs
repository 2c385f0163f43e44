//! Small dense complex linear algebra.
//!
//! Everything here is sized for port counts up to a few dozen. Matrices are
//! stored row-major in a flat `Vec<Complex64>`; eigen and QR factorizations
//! are delegated to `nalgebra` and wrapped so callers only ever see
//! [`ComplexMatrix`] values.

use std::fmt;
use std::ops::{Index, IndexMut};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Relative tolerance for the Hermitian check in [`HermitianMatrix::new`].
pub const HERMITIAN_TOL: f64 = 1e-14;

#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                let z = self[(r, c)];
                write!(f, "{:+.6}{:+.6}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major entries. Fails if the entry count does
    /// not match `rows * cols`.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims(format!("{} entries", rows * cols), format!("{} entries", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a square matrix from separate real and imaginary grids.
    pub fn from_parts(re: &[Vec<f64>], im: &[Vec<f64>]) -> Result<Self> {
        let n = re.len();
        if im.len() != n {
            return Err(Error::dims(format!("{n} imaginary rows"), format!("{} rows", im.len())));
        }
        let mut data = Vec::with_capacity(n * n);
        for (r, (re_row, im_row)) in re.iter().zip(im).enumerate() {
            if re_row.len() != n || im_row.len() != n {
                return Err(Error::dims(
                    format!("row {r} of length {n}"),
                    format!("lengths {} / {}", re_row.len(), im_row.len()),
                ));
            }
            data.extend(re_row.iter().zip(im_row).map(|(&a, &b)| Complex64::new(a, b)));
        }
        Ok(Self { rows: n, cols: n, data })
    }

    pub fn diagonal(entries: &[Complex64]) -> Self {
        let n = entries.len();
        let mut m = Self::zeros(n, n);
        for (i, &z) in entries.iter().enumerate() {
            m[(i, i)] = z;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn real_part(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).iter().map(|z| z.re).collect()).collect()
    }

    pub fn imag_part(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).iter().map(|z| z.im).collect()).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::dims(
                format!("{} rows on the right operand", self.cols),
                format!("{}x{}", rhs.rows, rhs.cols),
            ));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        matmul_into(self, rhs, &mut out);
        Ok(out)
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self> {
        self.check_same_shape(rhs)?;
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    pub fn add(&self, rhs: &Self) -> Result<Self> {
        self.check_same_shape(rhs)?;
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    /// Multiplies row `r` by `factors[r]`, i.e. left-multiplication by a
    /// diagonal matrix.
    pub fn scale_rows(&mut self, factors: &[Complex64]) {
        debug_assert_eq!(factors.len(), self.rows);
        for (r, f) in factors.iter().enumerate() {
            for z in &mut self.data[r * self.cols..(r + 1) * self.cols] {
                *z *= f;
            }
        }
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// `||A^H A - I||_F`. Only meaningful for square matrices.
    pub fn unitarity_defect(&self) -> f64 {
        let n = self.cols;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let mut s = Complex64::new(0.0, 0.0);
                for k in 0..self.rows {
                    s += self[(k, i)].conj() * self[(k, j)];
                }
                if i == j {
                    s -= 1.0;
                }
                acc += s.norm_sqr();
            }
        }
        acc.sqrt()
    }

    pub fn determinant(&self) -> Result<Complex64> {
        if !self.is_square() {
            return Err(Error::dims("square matrix", format!("{}x{}", self.rows, self.cols)));
        }
        Ok(self.to_nalgebra().determinant())
    }

    fn check_same_shape(&self, rhs: &Self) -> Result<()> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(Error::dims(
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", rhs.rows, rhs.cols),
            ));
        }
        Ok(())
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub(crate) fn from_nalgebra(m: &DMatrix<Complex64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.cols + c]
    }
}

/// `out = a * b` without shape checks; `out` must already be sized.
pub(crate) fn matmul_into(a: &ComplexMatrix, b: &ComplexMatrix, out: &mut ComplexMatrix) {
    let (n, k, m) = (a.rows, a.cols, b.cols);
    debug_assert_eq!(b.rows, k);
    debug_assert_eq!((out.rows, out.cols), (n, m));
    out.data.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
    for r in 0..n {
        let out_row = &mut out.data[r * m..(r + 1) * m];
        for j in 0..k {
            let aij = a.data[r * k + j];
            let b_row = &b.data[j * m..(j + 1) * m];
            for (o, bv) in out_row.iter_mut().zip(b_row) {
                *o += aij * bv;
            }
        }
    }
}

/// A square matrix known to equal its own adjoint.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix(ComplexMatrix);

impl HermitianMatrix {
    /// Validates `A = A^H` to within [`HERMITIAN_TOL`] of the largest entry
    /// magnitude.
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::dims("square matrix", format!("{}x{}", m.rows, m.cols)));
        }
        if !m.is_finite() {
            return Err(Error::NonFinite("Hermitian input"));
        }
        let scale = m.max_abs();
        let mut deviation: f64 = 0.0;
        for r in 0..m.rows {
            for c in r..m.cols {
                deviation = deviation.max((m[(r, c)] - m[(c, r)].conj()).norm());
            }
        }
        let tolerance = HERMITIAN_TOL * scale;
        if deviation > tolerance {
            return Err(Error::NotHermitian { deviation, tolerance });
        }
        Ok(Self(m))
    }

    pub fn zeros(n: usize) -> Self {
        Self(ComplexMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        Self(ComplexMatrix::identity(n))
    }

    /// Real symmetric matrix from row-major entries.
    pub fn from_real_symmetric(n: usize, entries: &[f64]) -> Result<Self> {
        let data = entries.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::new(ComplexMatrix::from_row_major(n, n, data)?)
    }

    pub fn dim(&self) -> usize {
        self.0.rows
    }

    pub fn as_matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    /// `self + s * other`, which stays Hermitian for real `s`.
    pub fn add_scaled(&self, s: f64, other: &HermitianMatrix) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::dims(format!("{0}x{0}", self.dim()), format!("{0}x{0}", other.dim())));
        }
        let data = self
            .0
            .data
            .iter()
            .zip(&other.0.data)
            .map(|(a, b)| a + b * s)
            .collect();
        Ok(Self(ComplexMatrix { rows: self.0.rows, cols: self.0.cols, data }))
    }

    pub(crate) fn from_matrix_unchecked(m: ComplexMatrix) -> Self {
        Self(m)
    }
}

#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Column `j` is the eigenvector for `eigenvalues[j]`.
    pub eigenvectors: ComplexMatrix,
}

const EIG_MAX_SWEEPS: usize = 10_000;

pub fn eig_hermitian(a: &HermitianMatrix) -> Result<EigenDecomposition> {
    let n = a.dim();
    if n == 0 {
        return Ok(EigenDecomposition {
            eigenvalues: Vec::new(),
            eigenvectors: ComplexMatrix::zeros(0, 0),
        });
    }
    let eig = a
        .0
        .to_nalgebra()
        .try_symmetric_eigen(f64::EPSILON, EIG_MAX_SWEEPS)
        .ok_or(Error::NoConvergence)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let eigenvectors = ComplexMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    if !eigenvectors.is_finite() || eigenvalues.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("eigendecomposition"));
    }
    Ok(EigenDecomposition { eigenvalues, eigenvectors })
}

/// `exp(i t A)` for Hermitian `A`, computed as `V diag(e^{i t λ}) V^H`.
pub fn expm_i_scaled(a: &HermitianMatrix, t: f64) -> Result<ComplexMatrix> {
    let EigenDecomposition { eigenvalues, eigenvectors: v } = eig_hermitian(a)?;
    let n = a.dim();
    let phases: Vec<Complex64> = eigenvalues.iter().map(|&l| Complex64::from_polar(1.0, t * l)).collect();
    let mut out = ComplexMatrix::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            let mut s = Complex64::new(0.0, 0.0);
            for k in 0..n {
                s += v[(r, k)] * phases[k] * v[(c, k)].conj();
            }
            out[(r, c)] = s;
        }
    }
    Ok(out)
}

pub fn frobenius_norm(a: &ComplexMatrix) -> f64 {
    a.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Relative tolerance (against `||A||_F`) below which a diagonal entry of R
/// marks the input as rank deficient.
pub const QR_RANK_TOL: f64 = 1e-12;

/// QR factorization with the convention that `R` has a real, non-negative
/// diagonal, which makes the factorization unique for full-rank input.
pub fn qr_unitary(a: &ComplexMatrix) -> Result<(ComplexMatrix, ComplexMatrix)> {
    if !a.is_square() {
        return Err(Error::dims("square matrix", format!("{}x{}", a.rows, a.cols)));
    }
    let n = a.rows;
    let qr = a.to_nalgebra().qr();
    let mut q = ComplexMatrix::from_nalgebra(&qr.q());
    let mut r = ComplexMatrix::from_nalgebra(&qr.r());
    let scale = frobenius_norm(a);
    for i in 0..n {
        let d = r[(i, i)];
        let mag = d.norm();
        if mag <= QR_RANK_TOL * scale || scale == 0.0 {
            return Err(Error::RankDeficient { index: i, magnitude: mag });
        }
        let phase = d / mag;
        // Q <- Q D, R <- D^* R keeps Q R unchanged.
        for k in 0..n {
            q[(k, i)] *= phase;
            r[(i, k)] *= phase.conj();
        }
        r[(i, i)] = Complex64::new(mag, 0.0);
        for k in 0..i {
            r[(i, k)] = Complex64::new(0.0, 0.0);
        }
    }
    Ok((q, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn jx4() -> HermitianMatrix {
        let s = 3f64.sqrt() / 2.0;
        #[rustfmt::skip]
        let e = [
            0.0, s, 0.0, 0.0,
            s, 0.0, 1.0, 0.0,
            0.0, 1.0, 0.0, s,
            0.0, 0.0, s, 0.0,
        ];
        HermitianMatrix::from_real_symmetric(4, &e).unwrap()
    }

    #[test]
    fn eig_two_by_two() {
        let h = HermitianMatrix::from_real_symmetric(2, &[0.0, 0.5, 0.5, 0.0]).unwrap();
        let e = eig_hermitian(&h).unwrap();
        assert!((e.eigenvalues[0] + 0.5).abs() < 1e-15);
        assert!((e.eigenvalues[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn eig_identity() {
        let e = eig_hermitian(&HermitianMatrix::identity(3)).unwrap();
        for l in e.eigenvalues {
            assert!((l - 1.0).abs() < 1e-15);
        }
        assert!(e.eigenvectors.unitarity_defect() < 1e-14);
    }

    #[test]
    fn eig_jx4_equidistant() {
        // Characteristic polynomial of the N=4 Jx matrix: l^4 - 5/2 l^2 + 9/16,
        // whose roots are +-1/2 and +-3/2.
        for l in [-1.5f64, -0.5, 0.5, 1.5] {
            let p = l.powi(4) - 2.5 * l * l + 9.0 / 16.0;
            assert!(p.abs() < 1e-15);
        }
        let e = eig_hermitian(&jx4()).unwrap();
        for (got, want) in e.eigenvalues.iter().zip([-1.5, -0.5, 0.5, 1.5]) {
            assert!((got - want).abs() < 1e-13, "{got} vs {want}");
        }
    }

    #[test]
    fn non_hermitian_rejected() {
        let m = ComplexMatrix::from_row_major(2, 2, vec![c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert!(matches!(HermitianMatrix::new(m), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn non_square_rejected() {
        assert!(HermitianMatrix::new(ComplexMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn expm_zero_time_is_identity() {
        let u = expm_i_scaled(&jx4(), 0.0).unwrap();
        assert!(frobenius_norm(&u.sub(&ComplexMatrix::identity(4)).unwrap()) < 1e-14);
    }

    #[test]
    fn expm_sigma_x_closed_form() {
        let h = HermitianMatrix::from_real_symmetric(2, &[0.0, 0.5, 0.5, 0.0]).unwrap();
        let u = expm_i_scaled(&h, FRAC_PI_2).unwrap();
        let s = FRAC_1_SQRT_2;
        let want = ComplexMatrix::from_row_major(2, 2, vec![c(s, 0.0), c(0.0, s), c(0.0, s), c(s, 0.0)]).unwrap();
        assert!(frobenius_norm(&u.sub(&want).unwrap()) < 1e-14);
    }

    #[test]
    fn expm_jx4_full_period() {
        let u = expm_i_scaled(&jx4(), 2.0 * PI).unwrap();
        let want = ComplexMatrix::identity(4).scale(c(-1.0, 0.0));
        assert!(frobenius_norm(&u.sub(&want).unwrap()) < 1e-12);
    }

    #[test]
    fn frobenius_examples() {
        assert!((frobenius_norm(&ComplexMatrix::identity(5)) - 5f64.sqrt()).abs() < 1e-15);
        assert_eq!(frobenius_norm(&ComplexMatrix::zeros(3, 3)), 0.0);
        let m = ComplexMatrix::from_row_major(2, 2, vec![c(3.0, 0.0), c(0.0, 4.0), c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert_eq!(frobenius_norm(&m), 5.0);
    }

    #[test]
    fn qr_identity_and_diagonal() {
        let (q, r) = qr_unitary(&ComplexMatrix::identity(3)).unwrap();
        assert!(frobenius_norm(&q.sub(&ComplexMatrix::identity(3)).unwrap()) < 1e-15);
        assert!(frobenius_norm(&r.sub(&ComplexMatrix::identity(3)).unwrap()) < 1e-15);

        let d = ComplexMatrix::diagonal(&[c(2.0, 0.0), c(3.0, 0.0)]);
        let (q, r) = qr_unitary(&d).unwrap();
        assert!(frobenius_norm(&q.sub(&ComplexMatrix::identity(2)).unwrap()) < 1e-15);
        assert!(frobenius_norm(&r.sub(&d).unwrap()) < 1e-15);
    }

    #[test]
    fn qr_rank_deficient() {
        let m = ComplexMatrix::from_row_major(2, 2, vec![c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(4.0, 0.0)]).unwrap();
        assert!(matches!(qr_unitary(&m), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn matmul_shape_mismatch() {
        assert!(ComplexMatrix::zeros(2, 3).matmul(&ComplexMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn from_row_major_checks_count() {
        assert!(ComplexMatrix::from_row_major(2, 2, vec![c(0.0, 0.0); 3]).is_err());
    }
}
