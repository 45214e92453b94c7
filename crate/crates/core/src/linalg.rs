//! Dense complex linear-algebra helpers shared by the solvers.
//!
//! `vec(·)` is column-major throughout, so `(B^T ⊗ A) vec(X) = vec(A X B)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CVec = DVector<Complex64>;
pub type CMat = DMatrix<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[inline]
pub fn cr(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// `x^H A x`, real part (A is assumed Hermitian by the caller).
pub fn quad_form(a: &CMat, x: &CVec) -> f64 {
    x.dotc(&(a * x)).re
}

/// `Re{a^H b}`.
#[inline]
pub fn re_dotc(a: &CVec, b: &CVec) -> f64 {
    a.dotc(b).re
}

pub fn norm_sq(x: &CVec) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

pub fn row_norm_sq(x: &nalgebra::RowDVector<Complex64>) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

pub fn inf_norm(x: &CVec) -> f64 {
    x.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn diag(v: &CVec) -> CMat {
    CMat::from_diagonal(v)
}

/// Column-major vectorization.
pub fn vec_of(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_of`].
pub fn unvec(v: &CVec, rows: usize, cols: usize) -> CMat {
    CMat::from_column_slice(rows, cols, v.as_slice())
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// `I_n ⊗ A`.
pub fn kron_eye(n: usize, a: &CMat) -> CMat {
    let (r, c) = a.shape();
    let mut out = CMat::zeros(n * r, n * c);
    for k in 0..n {
        out.view_mut((k * r, k * c), (r, c)).copy_from(a);
    }
    out
}

/// `vec(x y^T)` (column-major): entry `j*len(x)+i` is `x_i y_j`.
pub fn vec_outer_t(x: &CVec, y: &CVec) -> CVec {
    let m = x.len();
    let mut out = CVec::zeros(m * y.len());
    for j in 0..y.len() {
        for i in 0..m {
            out[j * m + i] = x[i] * y[j];
        }
    }
    out
}

/// `A ← (A + A^H)/2`.
pub fn hermitize(a: &mut CMat) {
    let ah = a.adjoint();
    *a += ah;
    *a *= cr(0.5);
}

pub fn hermitian(a: &CMat) -> CMat {
    let mut out = a.clone();
    hermitize(&mut out);
    out
}

pub fn frob(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_diag_re(a: &CMat) -> f64 {
    a.diagonal().iter().map(|z| z.re).fold(0.0, f64::max)
}

pub fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn hermitian_eigen(a: &CMat) -> SymmetricEigen<Complex64, Dyn> {
    SymmetricEigen::new(hermitian(a))
}

pub fn lambda_max(a: &CMat) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    hermitian_eigen(a).eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

/// Clip eigenvalues below `-1e-10 λ_max` to zero; error if the clipped mass
/// exceeds `1e-6 λ_max`.
pub fn psd_repair(a: &CMat, name: &'static str) -> Result<CMat> {
    let eig = hermitian_eigen(a);
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let lmin = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if lmin >= -1e-10 * lmax {
        return Ok(hermitian(a));
    }
    let limit = 1e-6 * lmax;
    if -lmin > limit {
        return Err(Error::PsdRepair {
            name,
            clipped: -lmin,
            limit,
        });
    }
    let clipped = eig.eigenvalues.map(|l| if l < 0.0 { 0.0 } else { l });
    let v = &eig.eigenvectors;
    let d = CMat::from_diagonal(&clipped.map(cr));
    let mut out = v * d * v.adjoint();
    hermitize(&mut out);
    Ok(out)
}

/// Cholesky factorization of a Hermitian positive definite matrix.
///
/// The complex square root never fails, so definiteness is checked on the
/// factor's diagonal.
pub fn cholesky(a: &CMat, name: &'static str) -> Result<Cholesky<Complex64, Dyn>> {
    let chol = Cholesky::new(hermitian(a)).ok_or(Error::NotPositiveDefinite(name))?;
    let l = chol.l_dirty();
    let ok = (0..l.nrows()).all(|i| {
        let d = l[(i, i)];
        d.re > 0.0 && d.re.is_finite() && d.im.abs() <= 1e-12 * d.re
    });
    if ok {
        Ok(chol)
    } else {
        Err(Error::NotPositiveDefinite(name))
    }
}

/// Solve `A x = b` for Hermitian positive definite `A`.
pub fn solve_hpd(a: &CMat, b: &CVec, name: &'static str) -> Result<CVec> {
    Ok(cholesky(a, name)?.solve(b))
}

/// Phase of every entry mapped onto the unit circle; zero entries map to 1.
pub fn unit_modulus(x: &CVec) -> CVec {
    x.map(|z| {
        let n = z.norm();
        if n > 0.0 {
            z / n
        } else {
            ONE
        }
    })
}

pub fn is_hermitian(a: &CMat, rel: f64) -> bool {
    let d = frob(&(a - a.adjoint()));
    d <= rel * frob(a).max(f64::MIN_POSITIVE)
}
