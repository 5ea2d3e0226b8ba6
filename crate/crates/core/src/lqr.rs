//! Infinite-horizon discrete LQR gain by Riccati fixed-point iteration, and
//! assembly of the two players' linear closed loops.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::linalg::{is_positive_definite, min_eigenvalue, LOEWNER_TOL};
use crate::model::{ClosedLoopDynamics, ModelError, Schedule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LqrError {
    #[error(
        "Riccati iteration did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("R + B'SB is singular")]
    SingularInnerMatrix,
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LqrWeights {
    pub qc: DMatrix<f64>,
    pub rc: DMatrix<f64>,
    pub iterations: usize,
    pub tol: f64,
}

impl LqrWeights {
    pub const DEFAULT_ITERATIONS: usize = 10_000;
    pub const DEFAULT_TOL: f64 = 1e-12;

    pub fn new(qc: DMatrix<f64>, rc: DMatrix<f64>) -> Self {
        Self {
            qc,
            rc,
            iterations: Self::DEFAULT_ITERATIONS,
            tol: Self::DEFAULT_TOL,
        }
    }

    /// `Qc = I_n`, `Rc = I_m`.
    pub fn identity(n: usize, m: usize) -> Self {
        Self::new(DMatrix::identity(n, n), DMatrix::identity(m, m))
    }

    pub fn validate(&self) -> Result<(), LqrError> {
        if !self.qc.is_square() || min_eigenvalue(&self.qc) < -LOEWNER_TOL {
            return Err(LqrError::InvalidWeights(
                "Qc must be positive semidefinite".into(),
            ));
        }
        if !is_positive_definite(&self.rc) {
            return Err(LqrError::InvalidWeights(
                "Rc must be positive definite".into(),
            ));
        }
        if self.iterations == 0 || self.tol.is_nan() || self.tol <= 0.0 {
            return Err(LqrError::InvalidWeights(
                "iterations and tol must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LqrSolution {
    pub k: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub iterations: usize,
    pub residual: f64,
}

fn check_dims(f: &DMatrix<f64>, b: &DMatrix<f64>, w: &LqrWeights) -> Result<(), LqrError> {
    let n = f.nrows();
    let m = b.ncols();
    if !f.is_square() || b.nrows() != n || w.qc.shape() != (n, n) || w.rc.shape() != (m, m) {
        return Err(LqrError::DimensionMismatch(format!(
            "F {:?}, B {:?}, Qc {:?}, Rc {:?}",
            f.shape(),
            b.shape(),
            w.qc.shape(),
            w.rc.shape()
        )));
    }
    Ok(())
}

fn gain(
    f: &DMatrix<f64>,
    b: &DMatrix<f64>,
    rc: &DMatrix<f64>,
    s: &DMatrix<f64>,
) -> Result<DMatrix<f64>, LqrError> {
    let bt_s = b.transpose() * s;
    let inner = rc + &bt_s * b;
    let chol = inner.cholesky().ok_or(LqrError::SingularInnerMatrix)?;
    Ok(chol.solve(&(bt_s * f)))
}

/// Iterator over the Riccati iterates `S_0 = Qc, S_1, ...`.
pub struct RiccatiIter<'a> {
    f: &'a DMatrix<f64>,
    b: &'a DMatrix<f64>,
    weights: &'a LqrWeights,
    s: Option<DMatrix<f64>>,
}

impl Iterator for RiccatiIter<'_> {
    type Item = Result<DMatrix<f64>, LqrError>;

    fn next(&mut self) -> Option<Self::Item> {
        let current = self.s.take()?;
        match gain(self.f, self.b, &self.weights.rc, &current) {
            Ok(k) => {
                let ft_s = self.f.transpose() * &current;
                let next = &self.weights.qc + &ft_s * self.f - ft_s * self.b * k;
                self.s = Some((&next + next.transpose()) * 0.5);
                Some(Ok(current))
            }
            Err(e) => Some(Err(e)),
        }
    }
}

pub fn riccati_iterates<'a>(
    f: &'a DMatrix<f64>,
    b: &'a DMatrix<f64>,
    weights: &'a LqrWeights,
) -> RiccatiIter<'a> {
    RiccatiIter {
        f,
        b,
        weights,
        s: Some(weights.qc.clone()),
    }
}

pub fn lqr_solve(
    f: &DMatrix<f64>,
    b: &DMatrix<f64>,
    weights: &LqrWeights,
) -> Result<LqrSolution, LqrError> {
    weights.validate()?;
    check_dims(f, b, weights)?;
    let mut iter = riccati_iterates(f, b, weights);
    let mut prev = iter.next().expect("first iterate")?;
    let mut residual = f64::INFINITY;
    for t in 1..=weights.iterations {
        let s = iter.next().expect("unbounded iterator")?;
        residual = (&s - &prev).amax();
        prev = s;
        if !residual.is_finite() {
            break;
        }
        if residual < weights.tol {
            return Ok(LqrSolution {
                k: gain(f, b, &weights.rc, &prev)?,
                s: prev,
                iterations: t,
                residual,
            });
        }
    }
    Err(LqrError::NonConvergence {
        iterations: weights.iterations,
        residual,
    })
}

/// Stationary LQR gain `K = (Rc + B'SB)^-1 B'SF`.
pub fn lqr_gain(
    f: &DMatrix<f64>,
    b: &DMatrix<f64>,
    weights: &LqrWeights,
) -> Result<DMatrix<f64>, LqrError> {
    lqr_solve(f, b, weights).map(|s| s.k)
}

/// Closed loops `x -> (F - BK) x` for the defender and `x -> (F + EW) x` for
/// the adversary.
pub fn build_linear_game(
    f: &DMatrix<f64>,
    b: &DMatrix<f64>,
    e: &DMatrix<f64>,
    k: &DMatrix<f64>,
    w: &DMatrix<f64>,
) -> Result<ClosedLoopDynamics, LqrError> {
    let n = f.nrows();
    let ok = f.is_square()
        && b.nrows() == n
        && k.shape() == (b.ncols(), n)
        && e.nrows() == n
        && w.shape() == (e.ncols(), n);
    if !ok {
        return Err(LqrError::DimensionMismatch(format!(
            "F {:?}, B {:?}, E {:?}, K {:?}, W {:?}",
            f.shape(),
            b.shape(),
            e.shape(),
            k.shape(),
            w.shape()
        )));
    }
    Ok(ClosedLoopDynamics::linear(
        Schedule::Constant(f - b * k),
        Schedule::Constant(f + e * w),
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::spectral_radius;
    use crate::model::{FlipState, PhysicalState};
    use proptest::prelude::*;

    #[test]
    fn zero_dynamics_zero_gain() {
        let k = lqr_gain(
            &DMatrix::zeros(2, 2),
            &DMatrix::identity(2, 1),
            &LqrWeights::identity(2, 1),
        )
        .unwrap();
        assert_eq!(k, DMatrix::zeros(1, 2));
    }

    #[test]
    fn scalar_golden_ratio() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let sol = lqr_solve(&one, &one, &LqrWeights::identity(1, 1)).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((sol.s[(0, 0)] - phi).abs() < 1e-10);
        assert!((sol.k[(0, 0)] - phi / (1.0 + phi)).abs() < 1e-10);
        assert!((sol.k[(0, 0)] - 0.61803).abs() < 1e-5);
    }

    #[test]
    fn double_integrator_is_stabilized() {
        let dt = 0.1;
        let f = DMatrix::from_row_slice(2, 2, &[0.99, dt, 0.0, 0.99]);
        let b = DMatrix::from_row_slice(2, 1, &[0.5 * dt * dt, dt]);
        let k = lqr_gain(&f, &b, &LqrWeights::identity(2, 1)).unwrap();
        assert!(spectral_radius(&(&f - &b * &k)) < 1.0);
    }

    #[test]
    fn iterates_are_psd() {
        let f = DMatrix::from_row_slice(2, 2, &[1.1, 0.3, 0.0, 0.95]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let w = LqrWeights::identity(2, 1);
        for s in riccati_iterates(&f, &b, &w).take(200) {
            assert!(min_eigenvalue(&s.unwrap()) >= -1e-10);
        }
    }

    #[test]
    fn uncontrollable_unstable_mode_does_not_converge() {
        let f = DMatrix::from_row_slice(2, 2, &[1.5, 0.0, 0.0, 0.5]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let mut w = LqrWeights::identity(2, 1);
        w.iterations = 500;
        assert!(matches!(
            lqr_gain(&f, &b, &w),
            Err(LqrError::NonConvergence { .. })
        ));
    }

    #[test]
    fn linear_game_examples() {
        let f = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 0.1]);
        let k = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let w = DMatrix::zeros(1, 2);
        let g = build_linear_game(&f, &b, &b, &k, &w).unwrap();
        let x = PhysicalState::new(vec![0.0, 1.0]).unwrap();
        let y1 = g.successor(&x, FlipState::Adversary, 0).unwrap();
        assert_eq!(y1.as_vector(), &(&f * x.as_vector()));
        let y0 = g.successor(&x, FlipState::Defender, 0).unwrap();
        // (F - BK) [0, 1]' = [0.1, 1 - 0.2]'
        assert!((y0.as_vector()[0] - 0.1).abs() < 1e-15);
        assert!((y0.as_vector()[1] - 0.8).abs() < 1e-15);

        let g = build_linear_game(&f, &b, &b, &DMatrix::zeros(1, 2), &w).unwrap();
        let a = g.successor(&x, FlipState::Defender, 0).unwrap();
        let c = g.successor(&x, FlipState::Adversary, 0).unwrap();
        assert_eq!(a, c);

        assert!(build_linear_game(&f, &b, &b, &DMatrix::zeros(2, 2), &w).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn stabilizing_and_scale_invariant(
            entries in prop::collection::vec(-1.5..1.5f64, 9),
            bent in prop::collection::vec(-1.0..1.0f64, 3),
            c in 0.1..10.0f64,
        ) {
            let f = DMatrix::from_row_slice(3, 3, &entries);
            let b = DMatrix::from_row_slice(3, 1, &bent);
            let w = LqrWeights::identity(3, 1);
            if let Ok(sol) = lqr_solve(&f, &b, &w) {
                prop_assert!(spectral_radius(&(&f - &b * &sol.k)) < 1.0);
                let scaled = LqrWeights::new(&w.qc * c, &w.rc * c);
                if let Ok(k2) = lqr_gain(&f, &b, &scaled) {
                    prop_assert!((&sol.k - k2).amax() < 1e-9 * sol.k.amax().max(1.0));
                }
            }
        }
    }
}
