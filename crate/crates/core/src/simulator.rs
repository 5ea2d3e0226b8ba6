//! Seeded Monte Carlo rollouts of the FlipDyn closed loop and exact
//! expected-cost evaluation by enumerating every joint action sequence.
//!
//! Run `r` of a batch with seed `s` draws from `ChaCha8Rng::seed_from_u64(s)`
//! on stream `r`, so results do not depend on how runs are scheduled.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::finite::{solve_cell, Continuation, StateEnumeration, ValueTables, ValueTree};
use crate::lq_nd::{nd_policy, NdLQParams, NdValueMatrices};
use crate::lq_scalar::{scalar_policy, ScalarLQParams, ScalarValueCoeffs};
use crate::model::{
    flip_transition, stage_cost, step_state, Action, ActionPair, FlipState, GameSpec, MixedPolicy2,
    ModelError, PhysicalState,
};

/// Generator used for every rollout, recorded in result metadata.
pub const RNG_ID: &str = "rand_chacha-0.9/ChaCha8Rng(seed_from_u64(seed), stream=run)";

/// Largest horizon accepted by [`expected_cost_exhaustive`].
pub const EXHAUSTIVE_CAP: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("policy unavailable at step {k}: {reason}")]
    Policy { k: usize, reason: String },
    #[error("horizon {horizon} exceeds the exhaustive-enumeration cap {cap}")]
    HorizonCapExceeded { horizon: usize, cap: usize },
    #[error("invalid rollout configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

type PolicyPair = (MixedPolicy2, MixedPolicy2);

/// Source of `(defender, adversary)` policies at `(k, x, alpha)`.
pub trait PolicyProvider: Sync {
    fn policy(&self, k: usize, x: &PhysicalState, alpha: FlipState)
        -> Result<PolicyPair, SimError>;
}

fn policy_err(k: usize, e: impl ToString) -> SimError {
    SimError::Policy {
        k,
        reason: e.to_string(),
    }
}

/// Both players use fixed distributions at every step.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPolicy {
    pub defender: MixedPolicy2,
    pub adversary: MixedPolicy2,
}

impl ConstantPolicy {
    pub fn new(defender_act: f64, adversary_act: f64) -> Result<Self, ModelError> {
        Ok(Self {
            defender: MixedPolicy2::from_act(defender_act)?,
            adversary: MixedPolicy2::from_act(adversary_act)?,
        })
    }
}

impl PolicyProvider for ConstantPolicy {
    fn policy(&self, _: usize, _: &PhysicalState, _: FlipState) -> Result<PolicyPair, SimError> {
        Ok((self.defender, self.adversary))
    }
}

/// Wraps a closure as a provider.
pub struct FnPolicy<F>(pub F);

impl<F> PolicyProvider for FnPolicy<F>
where
    F: Fn(usize, &PhysicalState, FlipState) -> Result<PolicyPair, SimError> + Sync,
{
    fn policy(
        &self,
        k: usize,
        x: &PhysicalState,
        alpha: FlipState,
    ) -> Result<PolicyPair, SimError> {
        (self.0)(k, x, alpha)
    }
}

/// Policies looked up from finite-state value tables.
pub struct TabularPolicy<'a> {
    pub tables: &'a ValueTables,
    pub enumeration: &'a StateEnumeration,
}

impl PolicyProvider for TabularPolicy<'_> {
    fn policy(
        &self,
        k: usize,
        x: &PhysicalState,
        alpha: FlipState,
    ) -> Result<PolicyPair, SimError> {
        let id = self
            .enumeration
            .id_of(x)
            .ok_or_else(|| policy_err(k, "state not in enumeration"))?;
        if k >= self.tables.horizon {
            return Err(policy_err(k, "step outside horizon"));
        }
        let p = self.tables.policy(k, id, alpha);
        Ok((p.defender, p.adversary))
    }
}

/// Policies read from a reachable-state value tree.
pub struct TreePolicy<'a>(pub &'a ValueTree);

impl PolicyProvider for TreePolicy<'_> {
    fn policy(
        &self,
        k: usize,
        x: &PhysicalState,
        alpha: FlipState,
    ) -> Result<PolicyPair, SimError> {
        let p = self
            .0
            .node(k, x)
            .and_then(|n| n.policies)
            .ok_or_else(|| policy_err(k, "state not in value tree"))?;
        let p = p[alpha.index()];
        Ok((p.defender, p.adversary))
    }
}

/// State-independent scalar LQ policies.
pub struct ScalarPolicy<'a> {
    pub coeffs: &'a ScalarValueCoeffs,
    pub params: &'a ScalarLQParams,
}

impl PolicyProvider for ScalarPolicy<'_> {
    fn policy(
        &self,
        k: usize,
        _: &PhysicalState,
        alpha: FlipState,
    ) -> Result<PolicyPair, SimError> {
        scalar_policy(self.coeffs, self.params, k, alpha).map_err(|e| policy_err(k, e))
    }
}

/// n-dimensional LQ policies.
///
/// On steps where the validity conditions hold and `x != 0` this is the
/// closed-form state-dependent policy. Elsewhere it solves the one-step game
/// whose continuation values are the quadratic forms of the step-`k+1`
/// matrices at the two successors; at `x = 0` that game is all zeros and both
/// players idle.
pub struct NdPolicy<'a> {
    pub matrices: &'a NdValueMatrices,
    pub params: &'a NdLQParams,
}

impl NdPolicy<'_> {
    pub fn fallback(
        &self,
        k: usize,
        x: &PhysicalState,
        alpha: FlipState,
    ) -> Result<PolicyPair, SimError> {
        let m = self.matrices;
        let v = x.as_vector();
        let y0 = &m.btilde[k] * v;
        let y1 = &m.wtilde[k] * v;
        let c = Continuation {
            v0_f0: y0.dot(&(&m.p0[k + 1] * &y0)),
            v1_f1: y1.dot(&(&m.p1[k + 1] * &y1)),
        };
        let q = |mat: &nalgebra::DMatrix<f64>| v.dot(&(mat * v));
        let cell = solve_cell(c, q(&self.params.q), q(&self.params.d), q(&self.params.a))
            .map_err(|e| policy_err(k, e))?;
        let p = cell.policies[alpha.index()];
        Ok((p.defender, p.adversary))
    }
}

impl PolicyProvider for NdPolicy<'_> {
    fn policy(
        &self,
        k: usize,
        x: &PhysicalState,
        alpha: FlipState,
    ) -> Result<PolicyPair, SimError> {
        if k >= self.matrices.horizon() {
            return Err(policy_err(k, "step outside horizon"));
        }
        if self.matrices.valid[k] && !x.is_zero() {
            if let Ok(p) = nd_policy(x, self.matrices, self.params, k, alpha) {
                return Ok(p);
            }
        }
        self.fallback(k, x, alpha)
    }
}

/// Replaces one or both players' policies by pure per-step action sequences.
pub struct PureOverride<'a, P: ?Sized> {
    pub base: &'a P,
    pub defender: Option<Vec<Action>>,
    pub adversary: Option<Vec<Action>>,
}

impl<P: PolicyProvider + ?Sized> PolicyProvider for PureOverride<'_, P> {
    fn policy(
        &self,
        k: usize,
        x: &PhysicalState,
        alpha: FlipState,
    ) -> Result<PolicyPair, SimError> {
        let (mut def, mut adv) = self.base.policy(k, x, alpha)?;
        if let Some(seq) = &self.defender {
            def = MixedPolicy2::pure(seq[k]);
        }
        if let Some(seq) = &self.adversary {
            adv = MixedPolicy2::pure(seq[k]);
        }
        Ok((def, adv))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutConfig {
    pub seed: u64,
    pub runs: usize,
    /// `(k, alpha)`: the FlipDyn state at step `k` is set to `alpha`.
    pub forced_events: Vec<(usize, FlipState)>,
    /// Keep the sampled-from policy probabilities in each trajectory row.
    pub record_policies: bool,
}

impl RolloutConfig {
    pub fn new(seed: u64, runs: usize) -> Self {
        Self {
            seed,
            runs,
            forced_events: Vec::new(),
            record_policies: false,
        }
    }

    pub fn with_forced(mut self, k: usize, alpha: FlipState) -> Self {
        self.forced_events.push((k, alpha));
        self
    }

    pub fn validate(&self, horizon: usize) -> Result<(), SimError> {
        if self.runs == 0 {
            return Err(SimError::InvalidConfig("runs must be >= 1".into()));
        }
        if let Some((k, _)) = self.forced_events.iter().find(|(k, _)| *k >= horizon) {
            return Err(SimError::InvalidConfig(format!(
                "forced event at step {k} is outside the horizon {horizon}"
            )));
        }
        Ok(())
    }

    fn forced_at(&self, k: usize) -> Option<FlipState> {
        self.forced_events
            .iter()
            .rev()
            .find(|(s, _)| *s == k)
            .map(|(_, a)| *a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub k: usize,
    pub x: Vec<f64>,
    pub alpha: FlipState,
    pub a0: bool,
    pub a1: bool,
    /// Stage cost for `k < L`; the terminal value at `k = L`.
    pub stage_cost: f64,
    /// `(defender p_act, adversary p_act)` when policies are recorded.
    pub policy: Option<(f64, f64)>,
}

/// One realised trajectory, rows `k = 0..=L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub run: usize,
    pub rows: Vec<TrajectoryRow>,
    pub total_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub runs: usize,
    /// Fraction of runs with the adversary in control, `k = 0..=L`.
    pub mean_alpha: Vec<f64>,
    /// Mean defender takeover probability, `k = 0..L`.
    pub mean_beta: Vec<f64>,
    /// Mean adversary takeover probability, `k = 0..L`.
    pub mean_gamma: Vec<f64>,
    pub mean_cost: f64,
    pub cost_std_error: f64,
}

pub fn rollout<P: PolicyProvider + ?Sized>(
    spec: &GameSpec,
    policies: &P,
    config: &RolloutConfig,
    run: usize,
) -> Result<TrajectoryRecord, SimError> {
    config.validate(spec.horizon)?;
    run_once(spec, policies, config, run, config.record_policies)
}

fn run_once<P: PolicyProvider + ?Sized>(
    spec: &GameSpec,
    policies: &P,
    config: &RolloutConfig,
    run: usize,
    record: bool,
) -> Result<TrajectoryRecord, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(run as u64);
    let l = spec.horizon;
    let mut rows = Vec::with_capacity(l + 1);
    let mut x = spec.x0.clone();
    let mut alpha = config.forced_at(0).unwrap_or(spec.alpha0);
    for k in 0..l {
        let (def, adv) = policies.policy(k, &x, alpha)?;
        let a0 = rng.random::<f64>() < def.p_act;
        let a1 = rng.random::<f64>() < adv.p_act;
        let actions = ActionPair::from_bits(a0, a1);
        rows.push(TrajectoryRow {
            k,
            x: x.as_vector().iter().copied().collect(),
            alpha,
            a0,
            a1,
            stage_cost: stage_cost(&x, actions, &spec.costs),
            policy: record.then_some((def.p_act, adv.p_act)),
        });
        let next = config
            .forced_at(k + 1)
            .unwrap_or_else(|| flip_transition(alpha, actions));
        x = step_state(&x, next, &spec.dynamics, k)?;
        alpha = next;
    }
    rows.push(TrajectoryRow {
        k: l,
        x: x.as_vector().iter().copied().collect(),
        alpha,
        a0: false,
        a1: false,
        stage_cost: spec.terminal.value(x.as_vector(), alpha),
        policy: None,
    });
    let total_cost = rows.iter().map(|r| r.stage_cost).sum();
    Ok(TrajectoryRecord {
        run,
        rows,
        total_cost,
    })
}

pub fn monte_carlo<P: PolicyProvider + ?Sized>(
    spec: &GameSpec,
    policies: &P,
    config: &RolloutConfig,
) -> Result<AggregateStats, SimError> {
    config.validate(spec.horizon)?;
    let l = spec.horizon;
    let trajectories = (0..config.runs)
        .into_par_iter()
        .map(|r| run_once(spec, policies, config, r, true))
        .collect::<Result<Vec<_>, _>>()?;
    let n = config.runs as f64;
    let mut alpha_sum = vec![0.0; l + 1];
    let mut beta_sum = vec![0.0; l];
    let mut gamma_sum = vec![0.0; l];
    let mut cost_sum = 0.0;
    for t in &trajectories {
        for row in &t.rows {
            alpha_sum[row.k] += row.alpha.index() as f64;
            if let Some((b, g)) = row.policy {
                beta_sum[row.k] += b;
                gamma_sum[row.k] += g;
            }
        }
        cost_sum += t.total_cost;
    }
    let mean_cost = cost_sum / n;
    let cost_std_error = if config.runs > 1 {
        let ss: f64 = trajectories
            .iter()
            .map(|t| (t.total_cost - mean_cost).powi(2))
            .sum();
        (ss / (n - 1.0)).sqrt() / n.sqrt()
    } else {
        0.0
    };
    let mean = |v: Vec<f64>| v.into_iter().map(|s| s / n).collect();
    Ok(AggregateStats {
        runs: config.runs,
        mean_alpha: mean(alpha_sum),
        mean_beta: mean(beta_sum),
        mean_gamma: mean(gamma_sum),
        mean_cost,
        cost_std_error,
    })
}

/// Exact expected cost from `(spec.x0, spec.alpha0)`, summing over every
/// joint action sequence with non-zero probability.
pub fn expected_cost_exhaustive<P: PolicyProvider + ?Sized>(
    spec: &GameSpec,
    policies: &P,
) -> Result<f64, SimError> {
    if spec.horizon > EXHAUSTIVE_CAP {
        return Err(SimError::HorizonCapExceeded {
            horizon: spec.horizon,
            cap: EXHAUSTIVE_CAP,
        });
    }
    expand(spec, policies, 0, &spec.x0, spec.alpha0)
}

fn expand<P: PolicyProvider + ?Sized>(
    spec: &GameSpec,
    policies: &P,
    k: usize,
    x: &PhysicalState,
    alpha: FlipState,
) -> Result<f64, SimError> {
    if k == spec.horizon {
        return Ok(spec.terminal.value(x.as_vector(), alpha));
    }
    let (def, adv) = policies.policy(k, x, alpha)?;
    let mut total = 0.0;
    for actions in ActionPair::all() {
        let w = def.prob(actions.defender) * adv.prob(actions.adversary);
        if w == 0.0 {
            continue;
        }
        let next = flip_transition(alpha, actions);
        let y = step_state(x, next, &spec.dynamics, k)?;
        total +=
            w * (stage_cost(x, actions, &spec.costs) + expand(spec, policies, k + 1, &y, next)?);
    }
    Ok(total)
}

/// Pure per-step action sequences of length `l`, in binary counting order.
pub fn pure_sequences(l: usize) -> impl Iterator<Item = Vec<Action>> {
    (0..1u64 << l).map(move |bits| {
        (0..l)
            .map(|k| Action::from_bit(bits >> k & 1 == 1))
            .collect()
    })
}

/// Convenience for [`DVector`]-valued initial states.
pub fn state(v: &[f64]) -> Result<PhysicalState, ModelError> {
    PhysicalState::from_vector(DVector::from_column_slice(v))
}
