//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{linalg::Schur, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::CMatrix;

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 10_000;

/// `max_ij |U^dagger U - I|_ij`.
pub fn unitarity_residual(u: &CMatrix) -> f64 {
    if !u.is_square() {
        return f64::INFINITY;
    }
    let prod = u.adjoint() * u;
    prod.iter()
        .enumerate()
        .map(|(idx, z)| {
            let (i, j) = (idx % u.nrows(), idx / u.nrows());
            let target = if i == j { 1.0 } else { 0.0 };
            (z - Complex64::new(target, 0.0)).norm()
        })
        .fold(0.0, f64::max)
}

/// `max_ij |H - H^dagger|_ij`.
pub fn hermitian_residual(h: &CMatrix) -> f64 {
    if !h.is_square() {
        return f64::INFINITY;
    }
    let n = h.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((h[(i, j)] - h[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Rejects matrices that are not Hermitian to within `1e-12` relative to their largest entry.
pub fn check_hermitian(h: &CMatrix) -> Result<()> {
    if !h.is_square() {
        return Err(Error::ShapeMismatch(format!(
            "Hamiltonian must be square, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite);
    }
    let residual = hermitian_residual(h);
    if residual > 1e-12 * max_abs(h).max(f64::MIN_POSITIVE) {
        return Err(Error::NotHermitian { residual });
    }
    Ok(())
}

/// Eigenvalues and unitary eigenvectors (columns) of a Hermitian matrix.
pub fn hermitian_eigen(h: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let sym = (h + h.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::try_new(sym, EIGEN_EPS, EIGEN_MAX_ITER).ok_or(
        Error::NoConvergence {
            what: "Hermitian eigendecomposition",
            iterations: EIGEN_MAX_ITER,
        },
    )?;
    Ok((eig.eigenvalues.iter().copied().collect(), eig.eigenvectors))
}

/// `V diag(f(lambda)) V^dagger`.
pub fn recompose(vectors: &CMatrix, diag: &[Complex64]) -> CMatrix {
    let mut scaled = vectors.clone();
    for (j, &d) in diag.iter().enumerate() {
        for z in scaled.column_mut(j).iter_mut() {
            *z *= d;
        }
    }
    scaled * vectors.adjoint()
}

/// `exp(-i h t)` for Hermitian `h`.
pub fn exp_minus_i(h: &CMatrix, t: f64) -> Result<CMatrix> {
    let (vals, vecs) = hermitian_eigen(h)?;
    let phases: Vec<Complex64> = vals
        .iter()
        .map(|&l| Complex64::from_polar(1.0, -l * t))
        .collect();
    Ok(recompose(&vecs, &phases))
}

/// Eigenvalues and eigenvectors of a unitary (normal) matrix via complex Schur.
///
/// For a normal matrix the Schur form is diagonal up to rounding, so the
/// Schur vectors are eigenvectors.
pub fn unitary_eigen(u: &CMatrix) -> Result<(Vec<Complex64>, CMatrix)> {
    let schur = Schur::try_new(u.clone(), EIGEN_EPS, EIGEN_MAX_ITER).ok_or(
        Error::NoConvergence {
            what: "complex Schur decomposition",
            iterations: EIGEN_MAX_ITER,
        },
    )?;
    let (q, t) = schur.unpack();
    let vals = (0..t.nrows()).map(|i| t[(i, i)]).collect();
    Ok((vals, q))
}
