//! Scalar linear dynamics with quadratic costs `g x^2`, `d x^2`, `a x^2`.
//!
//! Values are `V_k^alpha(x) = p_k^alpha x^2` and the equilibrium policies do
//! not depend on `x`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    ClosedLoopDynamics, CostModel, FlipState, GameSpec, MixedPolicy2, ModelError, PhysicalState,
    Schedule, TerminalCost,
};

/// Errors shared by the scalar and n-dimensional LQ solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LqError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("validity condition violated at step {k}")]
    ValidityViolation { k: usize },
    #[error("policy requested at step {k}, which is invalid or outside the horizon")]
    InvalidStep { k: usize },
    #[error("policy is undefined at the zero state")]
    ZeroState,
    #[error("gap matrix at step {k} is singular (smallest |eigenvalue| {min_abs_eig:e})")]
    SingularPcheck { k: usize, min_abs_eig: f64 },
    #[error("gap matrix at step {k} is ill-conditioned (condition number {cond:e})")]
    IllConditionedPcheck { k: usize, cond: f64 },
    #[error("quadratic form of the gap matrix vanishes at this state")]
    DegenerateQuadraticForm,
    #[error("{0} must be symmetric positive definite")]
    NotPositiveDefinite(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How a failed validity check is handled during a backward recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValidityMode {
    /// Stop with [`LqError::ValidityViolation`] at the first failing step.
    #[default]
    Strict,
    /// Record `valid[k] = false` and continue.
    Permissive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarLQParams {
    pub f: Schedule<f64>,
    pub b: Schedule<f64>,
    /// Attack channel; `None` means `E = B`.
    pub e: Option<Schedule<f64>>,
    pub k: Schedule<f64>,
    pub w: Schedule<f64>,
    pub g: f64,
    pub d: f64,
    pub a: f64,
    pub mu: f64,
    pub horizon: usize,
}

impl ScalarLQParams {
    /// Time-invariant parameters with `E = B`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        f: f64,
        b: f64,
        k: f64,
        w: f64,
        g: f64,
        d: f64,
        a: f64,
        mu: f64,
        horizon: usize,
    ) -> Result<Self, LqError> {
        let p = Self {
            f: f.into(),
            b: b.into(),
            e: None,
            k: k.into(),
            w: w.into(),
            g,
            d,
            a,
            mu,
            horizon,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parameters realising the closed loops `x -> b_tilde x` and
    /// `x -> w_tilde x` (`F = w_tilde`, `B = 1`, `K = w_tilde - b_tilde`, `W = 0`).
    pub fn from_closed_loop(
        b_tilde: f64,
        w_tilde: f64,
        g: f64,
        d: f64,
        a: f64,
        mu: f64,
        horizon: usize,
    ) -> Result<Self, LqError> {
        Self::new(w_tilde, 1.0, w_tilde - b_tilde, 0.0, g, d, a, mu, horizon)
    }

    pub fn with_e(mut self, e: Schedule<f64>) -> Self {
        self.e = Some(e);
        self
    }

    pub fn validate(&self) -> Result<(), LqError> {
        let mut errs = Vec::new();
        if !(self.g > 0.0 && self.g.is_finite()) {
            errs.push("g must be positive");
        }
        if !(self.d >= 0.0 && self.d.is_finite()) {
            errs.push("d must be non-negative");
        }
        if !(self.a >= 0.0 && self.a.is_finite()) {
            errs.push("a must be non-negative");
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            errs.push("mu must be non-negative");
        }
        if self.horizon == 0 {
            errs.push("horizon must be >= 1");
        }
        let sched = [&self.f, &self.b, &self.k, &self.w]
            .into_iter()
            .chain(self.e.as_ref());
        if sched.flat_map(|s| s.iter()).any(|v| !v.is_finite()) {
            errs.push("dynamics entries must be finite");
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(LqError::InvalidParams(errs.join("; ")))
        }
    }

    pub fn e_at(&self, k: usize) -> f64 {
        *self.e.as_ref().unwrap_or(&self.b).at(k)
    }

    /// Defender closed loop `F - B K` at step `k`.
    pub fn b_tilde(&self, k: usize) -> f64 {
        self.f.at(k) - self.b.at(k) * self.k.at(k)
    }

    /// Adversary closed loop `F + E W` at step `k`.
    pub fn w_tilde(&self, k: usize) -> f64 {
        self.f.at(k) + self.e_at(k) * self.w.at(k)
    }

    pub fn terminal(&self) -> (f64, f64) {
        (self.g, self.g + self.a.max(self.d) + self.mu)
    }

    /// The same game in general form, for the tree and finite solvers.
    pub fn game_spec(&self, x0: f64, alpha0: FlipState) -> Result<GameSpec, LqError> {
        let one = |v: f64| DMatrix::from_element(1, 1, v);
        let steps = self.horizon;
        let m0 = Schedule::Varying((0..steps).map(|k| one(self.b_tilde(k))).collect());
        let m1 = Schedule::Varying((0..steps).map(|k| one(self.w_tilde(k))).collect());
        let dynamics = ClosedLoopDynamics::linear(m0, m1)?;
        let costs = CostModel::quadratic(one(self.g), one(self.d), one(self.a));
        let (p0, p1) = self.terminal();
        let terminal = TerminalCost::quadratic(one(p0), one(p1));
        Ok(GameSpec::new(
            dynamics,
            costs,
            terminal,
            steps,
            PhysicalState::scalar(x0)?,
            alpha0,
        )?)
    }
}

/// Value coefficients over the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarValueCoeffs {
    /// `p0[k]` for `k = 0..=L`
    pub p0: Vec<f64>,
    pub p1: Vec<f64>,
    /// `ptilde[k]` is the gap coefficient `p~_{k+1}` used at step `k`, `k = 0..L`.
    pub ptilde: Vec<f64>,
    pub valid: Vec<bool>,
}

impl ScalarValueCoeffs {
    pub fn horizon(&self) -> usize {
        self.ptilde.len()
    }

    pub fn all_valid(&self) -> bool {
        self.valid.iter().all(|v| *v)
    }

    /// Defender idle probability `a / p~` in the defender-controlled state.
    pub fn beta_star(&self, k: usize, a: f64) -> f64 {
        a / self.ptilde[k]
    }

    /// Adversary idle probability `(p~ - d) / p~` in the defender-controlled state.
    pub fn gamma_star(&self, k: usize, d: f64) -> f64 {
        (self.ptilde[k] - d) / self.ptilde[k]
    }
}

pub fn scalar_backward_recursion(
    params: &ScalarLQParams,
    mode: ValidityMode,
) -> Result<ScalarValueCoeffs, LqError> {
    params.validate()?;
    let l = params.horizon;
    let (g, d, a) = (params.g, params.d, params.a);
    let mut p0 = vec![0.0; l + 1];
    let mut p1 = vec![0.0; l + 1];
    let mut ptilde = vec![0.0; l];
    let mut valid = vec![false; l];
    (p0[l], p1[l]) = params.terminal();
    for k in (0..l).rev() {
        let bt2 = params.b_tilde(k).powi(2);
        let wt2 = params.w_tilde(k).powi(2);
        let pt = wt2 * p1[k + 1] - bt2 * p0[k + 1];
        let corr = d * a / pt;
        p0[k] = g + bt2 * p0[k + 1] + d - corr;
        p1[k] = g + wt2 * p1[k + 1] - a + corr;
        ptilde[k] = pt;
        valid[k] = pt >= d.max(a) && p0[k] >= 0.0;
        if !valid[k] && mode == ValidityMode::Strict {
            return Err(LqError::ValidityViolation { k });
        }
    }
    Ok(ScalarValueCoeffs {
        p0,
        p1,
        ptilde,
        valid,
    })
}

/// Equilibrium `(defender, adversary)` policies at step `k`.
///
/// With the defender in control the defender idles with probability `a / p~`
/// and the adversary attacks with probability `d / p~`; with the adversary in
/// control the two distributions are swapped.
pub fn scalar_policy(
    coeffs: &ScalarValueCoeffs,
    params: &ScalarLQParams,
    k: usize,
    alpha: FlipState,
) -> Result<(MixedPolicy2, MixedPolicy2), LqError> {
    if k >= coeffs.horizon() || !coeffs.valid[k] {
        return Err(LqError::InvalidStep { k });
    }
    let pt = coeffs.ptilde[k];
    let (def_act, adv_act) = match alpha {
        FlipState::Defender => (1.0 - params.a / pt, params.d / pt),
        FlipState::Adversary => (params.a / pt, 1.0 - params.d / pt),
    };
    Ok((
        MixedPolicy2::from_act(def_act)?,
        MixedPolicy2::from_act(adv_act)?,
    ))
}

pub fn scalar_value_at(coeffs: &ScalarValueCoeffs, x: f64, alpha: FlipState, k: usize) -> f64 {
    let p = match alpha {
        FlipState::Defender => coeffs.p0[k],
        FlipState::Adversary => coeffs.p1[k],
    };
    p * x * x
}
