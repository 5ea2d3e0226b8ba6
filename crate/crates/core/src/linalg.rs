//! Symmetric-matrix helpers: eigenvalue bounds, Loewner comparisons and a
//! guarded inverse.

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

/// Tolerance used for Loewner comparisons and positive-definiteness checks.
pub const LOEWNER_TOL: f64 = 1e-10;
/// Smallest eigenvalue magnitude accepted when inverting.
pub const SINGULAR_TOL: f64 = 1e-10;
/// Largest condition number accepted when inverting.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InverseError {
    #[error("matrix is singular (smallest |eigenvalue| {0:e})")]
    Singular(f64),
    #[error("matrix is ill-conditioned (condition number {0:e})")]
    IllConditioned(f64),
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m)[0]
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    *sym_eigenvalues(m).last().unwrap()
}

/// `a >= b` in the Loewner order, i.e. `a - b` positive semidefinite within
/// [`LOEWNER_TOL`].
pub fn loewner_geq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    min_eigenvalue(&(a - b)) >= -LOEWNER_TOL
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= tol
}

pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    m.is_square() && is_symmetric(m, 1e-9 * m.amax().max(1.0)) && min_eigenvalue(m) > 0.0
}

/// Inverse of a symmetric matrix through its eigendecomposition, rejecting
/// near-singular and badly conditioned inputs.
pub fn guarded_sym_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>, InverseError> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let (min_abs, max_abs) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| {
            (lo.min(v.abs()), hi.max(v.abs()))
        });
    if min_abs < SINGULAR_TOL {
        return Err(InverseError::Singular(min_abs));
    }
    let cond = max_abs / min_abs;
    if cond > MAX_CONDITION {
        return Err(InverseError::IllConditioned(cond));
    }
    let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v));
    Ok(&eig.eigenvectors * inv_diag * eig.eigenvectors.transpose())
}

/// Spectral radius of a general square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loewner_examples() {
        let a = DMatrix::from_diagonal_element(2, 2, 0.9);
        let d = DMatrix::from_diagonal_element(2, 2, 0.5);
        assert!(loewner_geq(&a, &d));
        assert!(!loewner_geq(&d, &a));
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.1]);
        let y = DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 1.0]);
        assert!(!loewner_geq(&x, &y) && !loewner_geq(&y, &x));
    }

    #[test]
    fn inverse_round_trip() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let inv = guarded_sym_inverse(&m).unwrap();
        assert!((&m * inv - DMatrix::identity(2, 2)).amax() < 1e-14);
    }

    #[test]
    fn inverse_rejects_singular_and_ill_conditioned() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            guarded_sym_inverse(&m),
            Err(InverseError::Singular(_))
        ));
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1e4, 1e-9]));
        assert!(matches!(
            guarded_sym_inverse(&m),
            Err(InverseError::IllConditioned(_))
        ));
    }

    #[test]
    fn spectral_radius_of_rotation() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -0.5, 0.5, 0.0]);
        assert!((spectral_radius(&m) - 0.5).abs() < 1e-14);
    }
}
