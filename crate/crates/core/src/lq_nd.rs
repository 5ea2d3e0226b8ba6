//! Quadratic value approximation for n-dimensional linear dynamics with
//! quadratic costs `x'Qx`, `x'Dx`, `x'Ax`.
//!
//! Values are approximated as `x' P_k^alpha x`. The gap matrix
//! `Pcheck_{k+1} = Wt' P1_{k+1} Wt - Bt' P0_{k+1} Bt` (with closed loops
//! `Bt = F - BK`, `Wt = F + EW`) plays the role of the scalar `p~`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::{
    guarded_sym_inverse, is_positive_definite, loewner_geq, max_eigenvalue, min_eigenvalue,
    symmetrize, InverseError,
};
use crate::lq_scalar::{LqError, ValidityMode};
use crate::model::{
    ClosedLoopDynamics, CostModel, FlipState, GameSpec, MixedPolicy2, PhysicalState, Schedule,
    TerminalCost,
};

#[derive(Debug, Clone, PartialEq)]
pub struct NdLQParams {
    pub f: Schedule<DMatrix<f64>>,
    pub b: Schedule<DMatrix<f64>>,
    /// Attack channel; `None` means `E = B`.
    pub e: Option<Schedule<DMatrix<f64>>>,
    pub k: Schedule<DMatrix<f64>>,
    pub w: Schedule<DMatrix<f64>>,
    pub q: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub mu: f64,
    pub horizon: usize,
}

impl NdLQParams {
    /// Time-invariant parameters with `E = B`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        f: DMatrix<f64>,
        b: DMatrix<f64>,
        k: DMatrix<f64>,
        w: DMatrix<f64>,
        q: DMatrix<f64>,
        d: DMatrix<f64>,
        a: DMatrix<f64>,
        mu: f64,
        horizon: usize,
    ) -> Result<Self, LqError> {
        let p = Self {
            f: f.into(),
            b: b.into(),
            e: None,
            k: k.into(),
            w: w.into(),
            q,
            d,
            a,
            mu,
            horizon,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parameters realising the closed loops `b_tilde` and `w_tilde` directly
    /// (`F = w_tilde`, `B = I`, `K = w_tilde - b_tilde`, `W = 0`).
    pub fn from_closed_loop(
        b_tilde: DMatrix<f64>,
        w_tilde: DMatrix<f64>,
        q: DMatrix<f64>,
        d: DMatrix<f64>,
        a: DMatrix<f64>,
        mu: f64,
        horizon: usize,
    ) -> Result<Self, LqError> {
        let n = w_tilde.nrows();
        let k = &w_tilde - &b_tilde;
        Self::new(
            w_tilde,
            DMatrix::identity(n, n),
            k,
            DMatrix::zeros(n, n),
            q,
            d,
            a,
            mu,
            horizon,
        )
    }

    pub fn with_e(mut self, e: Schedule<DMatrix<f64>>) -> Result<Self, LqError> {
        self.e = Some(e);
        self.validate()?;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn validate(&self) -> Result<(), LqError> {
        let mut errs: Vec<String> = Vec::new();
        let n = self.q.nrows();
        for (name, m) in [("Q", &self.q), ("D", &self.d), ("A", &self.a)] {
            if m.shape() != (n, n) {
                errs.push(format!("{name} must be {n}x{n}"));
            } else if !is_positive_definite(m) {
                errs.push(format!("{name} must be symmetric positive definite"));
            }
        }
        let e = self.e.as_ref().unwrap_or(&self.b);
        let shape_ok = |s: &Schedule<DMatrix<f64>>, rows: Option<usize>, cols: Option<usize>| {
            s.iter().all(|m| {
                rows.is_none_or(|r| m.nrows() == r)
                    && cols.is_none_or(|c| m.ncols() == c)
                    && m.iter().all(|v| v.is_finite())
            })
        };
        let m_in = self.b.at(0).ncols();
        let p_in = e.at(0).ncols();
        if !shape_ok(&self.f, Some(n), Some(n)) {
            errs.push(format!("F must be {n}x{n} with finite entries"));
        }
        if !shape_ok(&self.b, Some(n), Some(m_in)) {
            errs.push(format!("B must be {n}x{m_in} with finite entries"));
        }
        if !shape_ok(&self.k, Some(m_in), Some(n)) {
            errs.push(format!("K must be {m_in}x{n} with finite entries"));
        }
        if !shape_ok(e, Some(n), Some(p_in)) {
            errs.push(format!("E must be {n}x{p_in} with finite entries"));
        }
        if !shape_ok(&self.w, Some(p_in), Some(n)) {
            errs.push(format!("W must be {p_in}x{n} with finite entries"));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            errs.push("mu must be non-negative".into());
        }
        if self.horizon == 0 {
            errs.push("horizon must be >= 1".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(LqError::InvalidParams(errs.join("; ")))
        }
    }

    pub fn e_at(&self, k: usize) -> &DMatrix<f64> {
        self.e.as_ref().unwrap_or(&self.b).at(k)
    }

    /// Defender closed loop `F - B K`.
    pub fn b_tilde(&self, k: usize) -> DMatrix<f64> {
        self.f.at(k) - self.b.at(k) * self.k.at(k)
    }

    /// Adversary closed loop `F + E W`.
    pub fn w_tilde(&self, k: usize) -> DMatrix<f64> {
        self.f.at(k) + self.e_at(k) * self.w.at(k)
    }

    /// Terminal matrices. The adversary-side matrix is `Q + A + mu I` when
    /// `A >= D`, `Q + D + mu I` when `D >= A`, and
    /// `Q + max(lmax(A), lmax(D)) I + mu I` when the two are incomparable.
    pub fn terminal(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.dim();
        let mu_i = DMatrix::identity(n, n) * self.mu;
        let p1 = if loewner_geq(&self.a, &self.d) {
            &self.q + &self.a + mu_i
        } else if loewner_geq(&self.d, &self.a) {
            &self.q + &self.d + mu_i
        } else {
            let top = max_eigenvalue(&self.a).max(max_eigenvalue(&self.d));
            &self.q + DMatrix::identity(n, n) * top + mu_i
        };
        (self.q.clone(), p1)
    }

    /// The same game in general form, for the tree solver and the simulator.
    pub fn game_spec(&self, x0: DVector<f64>, alpha0: FlipState) -> Result<GameSpec, LqError> {
        let steps = self.horizon;
        let m0 = Schedule::Varying((0..steps).map(|k| self.b_tilde(k)).collect());
        let m1 = Schedule::Varying((0..steps).map(|k| self.w_tilde(k)).collect());
        let dynamics = ClosedLoopDynamics::linear(m0, m1)?;
        let costs = CostModel::quadratic(self.q.clone(), self.d.clone(), self.a.clone());
        let (p0, p1) = self.terminal();
        Ok(GameSpec::new(
            dynamics,
            costs,
            TerminalCost::quadratic(p0, p1),
            steps,
            PhysicalState::from_vector(x0)?,
            alpha0,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NdValueMatrices {
    /// `p0[k]` for `k = 0..=L`
    pub p0: Vec<DMatrix<f64>>,
    pub p1: Vec<DMatrix<f64>>,
    /// `pcheck[k]` is the gap matrix `Pcheck_{k+1}` used at step `k`.
    pub pcheck: Vec<DMatrix<f64>>,
    pub btilde: Vec<DMatrix<f64>>,
    pub wtilde: Vec<DMatrix<f64>>,
    pub valid: Vec<bool>,
}

impl NdValueMatrices {
    pub fn horizon(&self) -> usize {
        self.pcheck.len()
    }

    pub fn all_valid(&self) -> bool {
        self.valid.iter().all(|v| *v)
    }

    pub fn min_eig_p0(&self) -> Vec<f64> {
        self.p0.iter().map(min_eigenvalue).collect()
    }

    pub fn min_eig_p1(&self) -> Vec<f64> {
        self.p1.iter().map(min_eigenvalue).collect()
    }

    pub fn min_eig_pcheck(&self) -> Vec<f64> {
        self.pcheck.iter().map(min_eigenvalue).collect()
    }

    pub fn value_at(&self, x: &DVector<f64>, alpha: FlipState, k: usize) -> f64 {
        let p = match alpha {
            FlipState::Defender => &self.p0[k],
            FlipState::Adversary => &self.p1[k],
        };
        x.dot(&(p * x))
    }
}

fn quad(m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(m * x))
}

pub fn nd_backward_recursion(
    params: &NdLQParams,
    mode: ValidityMode,
) -> Result<NdValueMatrices, LqError> {
    params.validate()?;
    let l = params.horizon;
    let (q, d, a) = (&params.q, &params.d, &params.a);
    let (p0_l, p1_l) = params.terminal();
    let mut p0 = vec![DMatrix::zeros(0, 0); l + 1];
    let mut p1 = vec![DMatrix::zeros(0, 0); l + 1];
    let mut pcheck = Vec::with_capacity(l);
    let mut btilde = Vec::with_capacity(l);
    let mut wtilde = Vec::with_capacity(l);
    let mut valid = vec![false; l];
    p0[l] = p0_l;
    p1[l] = p1_l;
    for k in (0..l).rev() {
        let bt = params.b_tilde(k);
        let wt = params.w_tilde(k);
        let bpb = bt.transpose() * &p0[k + 1] * &bt;
        let wpw = wt.transpose() * &p1[k + 1] * &wt;
        let pc = symmetrize(&(&wpw - &bpb));
        let inv = guarded_sym_inverse(&pc).map_err(|e| match e {
            InverseError::Singular(min_abs_eig) => LqError::SingularPcheck { k, min_abs_eig },
            InverseError::IllConditioned(cond) => LqError::IllConditionedPcheck { k, cond },
        })?;
        let dpa = d * inv * a;
        p0[k] = symmetrize(&(q + d + &bpb - &dpa));
        p1[k] = symmetrize(&(q - a + &wpw + &dpa));
        valid[k] = loewner_geq(&pc, a) && loewner_geq(&pc, d);
        pcheck.push(pc);
        btilde.push(bt);
        wtilde.push(wt);
        if !valid[k] && mode == ValidityMode::Strict {
            return Err(LqError::ValidityViolation { k });
        }
    }
    pcheck.reverse();
    btilde.reverse();
    wtilde.reverse();
    Ok(NdValueMatrices {
        p0,
        p1,
        pcheck,
        btilde,
        wtilde,
        valid,
    })
}

/// `(beta_hat, 1 - gamma_hat) = (x'Ax, x'Dx) / x'Pcheck x`: the defender's
/// idle probability and the adversary's attack probability while the defender
/// is in control.
pub fn nd_policy_scalars(
    x: &DVector<f64>,
    pcheck: &DMatrix<f64>,
    params: &NdLQParams,
) -> Result<(f64, f64), LqError> {
    if x.iter().all(|v| *v == 0.0) {
        return Err(LqError::ZeroState);
    }
    let den = quad(pcheck, x);
    if den == 0.0 {
        return Err(LqError::DegenerateQuadraticForm);
    }
    Ok((quad(&params.a, x) / den, quad(&params.d, x) / den))
}

/// Equilibrium `(defender, adversary)` policies at `x`, step `k`.
pub fn nd_policy(
    x: &PhysicalState,
    matrices: &NdValueMatrices,
    params: &NdLQParams,
    k: usize,
    alpha: FlipState,
) -> Result<(MixedPolicy2, MixedPolicy2), LqError> {
    if k >= matrices.horizon() || !matrices.valid[k] {
        return Err(LqError::InvalidStep { k });
    }
    let (beta, one_minus_gamma) = nd_policy_scalars(x.as_vector(), &matrices.pcheck[k], params)?;
    let (def_act, adv_act) = match alpha {
        FlipState::Defender => (1.0 - beta, one_minus_gamma),
        FlipState::Adversary => (beta, 1.0 - one_minus_gamma),
    };
    Ok((
        MixedPolicy2::from_act(def_act)?,
        MixedPolicy2::from_act(adv_act)?,
    ))
}

/// Exact one-step values at `x` given quadratic continuation matrices, before
/// any re-parameterisation.
pub fn exact_one_step_values(
    x: &DVector<f64>,
    p0_next: &DMatrix<f64>,
    p1_next: &DMatrix<f64>,
    params: &NdLQParams,
    k: usize,
) -> Result<(f64, f64), LqError> {
    let bt = params.b_tilde(k);
    let wt = params.w_tilde(k);
    let bpb = bt.transpose() * p0_next * &bt;
    let wpw = wt.transpose() * p1_next * &wt;
    let den = quad(&wpw, x) - quad(&bpb, x);
    if den == 0.0 || !den.is_finite() {
        return Err(LqError::DegenerateQuadraticForm);
    }
    let corr = quad(&params.d, x) * quad(&params.a, x) / den;
    let v0 = quad(&params.q, x) + quad(&params.d, x) + quad(&bpb, x) - corr;
    let v1 = quad(&params.q, x) - quad(&params.a, x) + quad(&wpw, x) + corr;
    Ok((v0, v1))
}

/// `(x'x)^2 <= (x'Px)(x'P^-1 x)` within `1e-10` relative to the right side.
pub fn proposition1_check(p: &DMatrix<f64>, x: &DVector<f64>) -> Result<bool, LqError> {
    if !is_positive_definite(p) {
        return Err(LqError::NotPositiveDefinite("P"));
    }
    if x.iter().all(|v| *v == 0.0) {
        return Err(LqError::ZeroState);
    }
    let inv = guarded_sym_inverse(p).map_err(|_| LqError::NotPositiveDefinite("P"))?;
    let lhs = x.dot(x).powi(2);
    let rhs = quad(p, x) * quad(&inv, x);
    Ok(lhs <= rhs + 1e-10 * rhs.max(1.0))
}
