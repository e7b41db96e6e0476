//! Small dense Hermitian linear algebra on `m x m` complex matrices.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Relative eigenvalue floor used for negative powers.
pub const EIGEN_CLAMP: f64 = 1e-14;

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity(m: usize) -> CMat {
    CMat::identity(m, m)
}

pub fn from_real(m: usize, entries: &[f64]) -> CMat {
    CMat::from_row_iterator(m, m, entries.iter().map(|&x| c(x)))
}

pub fn diag(d: &[f64]) -> CMat {
    CMat::from_diagonal(&CVec::from_iterator(d.len(), d.iter().map(|&x| c(x))))
}

pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()) * c(0.5)
}

pub fn trace_re(a: &CMat) -> f64 {
    (0..a.nrows()).map(|i| a[(i, i)].re).sum()
}

/// Relative Hermitian defect `||A - A^*|| / ||A||` in the Frobenius norm.
pub fn hermitian_defect(a: &CMat) -> f64 {
    let nrm = a.norm();
    if nrm == 0.0 {
        0.0
    } else {
        (a - a.adjoint()).norm() / nrm
    }
}

fn is_diagonal(a: &CMat) -> bool {
    let m = a.nrows();
    (0..m).all(|i| (0..m).all(|j| i == j || a[(i, j)] == Complex64::new(0.0, 0.0)))
}

/// Eigenvalues (ascending) and eigenvectors of the Hermitian part of `a`.
pub fn eigh(a: &CMat) -> (Vec<f64>, CMat) {
    let m = a.nrows();
    if is_diagonal(a) {
        let mut idx: Vec<usize> = (0..m).collect();
        idx.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
        let vals = idx.iter().map(|&i| a[(i, i)].re).collect();
        let mut vecs = CMat::zeros(m, m);
        for (col, &i) in idx.iter().enumerate() {
            vecs[(i, col)] = c(1.0);
        }
        return (vals, vecs);
    }
    let eig = hermitian_part(a).symmetric_eigen();
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = CMat::from_columns(&idx.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect::<Vec<_>>());
    (vals, vecs)
}

fn rebuild(vals: &[f64], vecs: &CMat) -> CMat {
    let d = diag(vals);
    vecs * d * vecs.adjoint()
}

/// `A^r` for Hermitian nonnegative `A`; eigenvalues are clamped below at
/// `EIGEN_CLAMP * tr(A)` so negative powers stay finite.
pub fn herm_power(a: &CMat, r: f64) -> CMat {
    let (vals, vecs) = eigh(a);
    let floor = EIGEN_CLAMP * trace_re(a).max(f64::MIN_POSITIVE);
    let v: Vec<f64> = vals.iter().map(|&l| l.max(floor).powf(r)).collect();
    rebuild(&v, &vecs)
}

/// Like [`herm_power`] but reports a singular matrix instead of clamping.
pub fn herm_power_checked(a: &CMat, r: f64, node: &[f64]) -> Result<CMat> {
    let (vals, vecs) = eigh(a);
    let tr = trace_re(a);
    if !(tr > 0.0) || vals[0] <= EIGEN_CLAMP * tr {
        return Err(Error::Singular { node: node.to_vec() });
    }
    let v: Vec<f64> = vals.iter().map(|&l| l.powf(r)).collect();
    Ok(rebuild(&v, &vecs))
}

/// `(A^r, A^{-r})` from one eigendecomposition, refusing singular `A`.
pub fn herm_power_pair(a: &CMat, r: f64, node: &[f64]) -> Result<(CMat, CMat)> {
    let (vals, vecs) = eigh(a);
    let tr = trace_re(a);
    if !(tr > 0.0) || vals[0] <= EIGEN_CLAMP * tr {
        return Err(Error::Singular { node: node.to_vec() });
    }
    let pos: Vec<f64> = vals.iter().map(|&l| l.powf(r)).collect();
    let neg: Vec<f64> = vals.iter().map(|&l| l.powf(-r)).collect();
    Ok((rebuild(&pos, &vecs), rebuild(&neg, &vecs)))
}

pub fn sqrt_psd(a: &CMat) -> CMat {
    herm_power(a, 0.5)
}

/// Largest singular value.
pub fn spectral_norm(a: &CMat) -> f64 {
    match (a.nrows(), a.ncols()) {
        (1, 1) => a[(0, 0)].norm(),
        (2, 2) => {
            // eigenvalues of A^*A in closed form
            let p = a[(0, 0)].norm_sqr() + a[(1, 0)].norm_sqr();
            let q = a[(0, 1)].norm_sqr() + a[(1, 1)].norm_sqr();
            let r = (a[(0, 0)].conj() * a[(0, 1)] + a[(1, 0)].conj() * a[(1, 1)]).norm_sqr();
            let half = 0.5 * (p + q);
            let disc = (0.25 * (p - q) * (p - q) + r).sqrt();
            (half + disc).max(0.0).sqrt()
        }
        _ => {
            let g = a.adjoint() * a;
            let (vals, _) = eigh(&g);
            vals.last().copied().unwrap_or(0.0).max(0.0).sqrt()
        }
    }
}

pub fn vec_norm(v: &CVec) -> f64 {
    v.norm()
}

/// Smallest eigenvalue of the Hermitian part.
pub fn min_eigenvalue(a: &CMat) -> f64 {
    eigh(a).0[0]
}

pub fn inverse(a: &CMat) -> Result<CMat> {
    a.clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("matrix is not invertible".into()))
}
