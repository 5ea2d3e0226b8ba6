//! Hybrid game definition: physical state, FlipDyn state, closed-loop maps,
//! stage/takeover costs and single-step evaluation of the closed loop.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("state entries must be finite")]
    NonFiniteState,
    #[error("state must have at least one entry")]
    EmptyState,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("horizon must be >= 1")]
    ZeroHorizon,
    #[error("step {k} is outside the horizon {horizon}")]
    StepOutOfRange { k: usize, horizon: usize },
    #[error("closed-loop map produced a non-finite state at step {k}")]
    NonFiniteSuccessor { k: usize },
}

/// Plant state `x_k`. Always non-empty with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalState(DVector<f64>);

/// Exact bit pattern of a state vector; two states share a key iff every entry
/// has the same IEEE-754 representation.
pub type StateKey = Vec<u64>;

impl PhysicalState {
    pub fn new(values: Vec<f64>) -> Result<Self, ModelError> {
        Self::from_vector(DVector::from_vec(values))
    }

    pub fn from_vector(v: DVector<f64>) -> Result<Self, ModelError> {
        if v.is_empty() {
            return Err(ModelError::EmptyState);
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::NonFiniteState);
        }
        Ok(Self(v))
    }

    pub fn scalar(x: f64) -> Result<Self, ModelError> {
        Self::new(vec![x])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }

    pub fn key(&self) -> StateKey {
        self.0.iter().map(|x| x.to_bits()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|x| *x == 0.0)
    }

    pub fn quadratic_form(&self, m: &DMatrix<f64>) -> f64 {
        self.0.dot(&(m * &self.0))
    }
}

/// Which player currently controls the resource.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FlipState {
    Defender,
    Adversary,
}

impl FlipState {
    pub const BOTH: [FlipState; 2] = [FlipState::Defender, FlipState::Adversary];

    pub fn index(self) -> usize {
        match self {
            FlipState::Defender => 0,
            FlipState::Adversary => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(FlipState::Defender),
            1 => Some(FlipState::Adversary),
            _ => None,
        }
    }
}

impl fmt::Display for FlipState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

/// A single player's binary move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Idle,
    Takeover,
}

impl Action {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Action::Takeover
        } else {
            Action::Idle
        }
    }

    pub fn is_takeover(self) -> bool {
        self == Action::Takeover
    }

    /// Row/column index in a cost-to-go matrix: 0 = idle, 1 = takeover.
    pub fn index(self) -> usize {
        match self {
            Action::Idle => 0,
            Action::Takeover => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionPair {
    pub defender: Action,
    pub adversary: Action,
}

impl ActionPair {
    pub fn new(defender: Action, adversary: Action) -> Self {
        Self {
            defender,
            adversary,
        }
    }

    pub fn from_bits(defender: bool, adversary: bool) -> Self {
        Self::new(Action::from_bit(defender), Action::from_bit(adversary))
    }

    /// All four joint actions in (defender, adversary) row-major order.
    pub fn all() -> [ActionPair; 4] {
        [
            Self::from_bits(false, false),
            Self::from_bits(false, true),
            Self::from_bits(true, false),
            Self::from_bits(true, true),
        ]
    }
}

/// Distribution over {idle, takeover} for one player at one step.
///
/// `p_idle` is always derived as `1 - p_act`, which makes the pair sum to
/// exactly one in IEEE arithmetic for any `p_act` in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixedPolicy2 {
    pub p_act: f64,
    pub p_idle: f64,
}

impl MixedPolicy2 {
    pub fn from_act(p_act: f64) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&p_act) {
            return Err(ModelError::InvalidProbability(p_act));
        }
        Ok(Self {
            p_act,
            p_idle: 1.0 - p_act,
        })
    }

    pub fn pure(action: Action) -> Self {
        match action {
            Action::Idle => Self {
                p_act: 0.0,
                p_idle: 1.0,
            },
            Action::Takeover => Self {
                p_act: 1.0,
                p_idle: 0.0,
            },
        }
    }

    /// Probability mass indexed like a matrix row/column (0 = idle, 1 = takeover).
    pub fn prob(&self, action: Action) -> f64 {
        match action {
            Action::Idle => self.p_idle,
            Action::Takeover => self.p_act,
        }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.p_idle, self.p_act]
    }
}

/// Piecewise-constant or step-indexed parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule<T> {
    Constant(T),
    Varying(Vec<T>),
}

impl<T> Schedule<T> {
    /// Value at step `k`; a varying schedule shorter than the horizon holds its
    /// last entry.
    pub fn at(&self, k: usize) -> &T {
        match self {
            Schedule::Constant(v) => v,
            Schedule::Varying(vs) => &vs[k.min(vs.len() - 1)],
        }
    }

    pub fn len_hint(&self) -> Option<usize> {
        match self {
            Schedule::Constant(_) => None,
            Schedule::Varying(vs) => Some(vs.len()),
        }
    }

    pub fn iter(&self) -> Box<dyn Iterator<Item = &T> + '_> {
        match self {
            Schedule::Constant(v) => Box::new(std::iter::once(v)),
            Schedule::Varying(vs) => Box::new(vs.iter()),
        }
    }
}

impl<T> From<T> for Schedule<T> {
    fn from(v: T) -> Self {
        Schedule::Constant(v)
    }
}

pub type StateMapFn = dyn Fn(usize, &DVector<f64>) -> DVector<f64> + Send + Sync;
pub type StateCostFn = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;

/// One player's closed-loop map `x -> f_k(x)`.
#[derive(Clone)]
pub enum ClosedLoopMap {
    Linear(Schedule<DMatrix<f64>>),
    Function(Arc<StateMapFn>),
}

impl ClosedLoopMap {
    pub fn apply(&self, k: usize, x: &DVector<f64>) -> DVector<f64> {
        match self {
            ClosedLoopMap::Linear(m) => m.at(k) * x,
            ClosedLoopMap::Function(f) => f(k, x),
        }
    }

    pub fn matrix(&self, k: usize) -> Option<&DMatrix<f64>> {
        match self {
            ClosedLoopMap::Linear(m) => Some(m.at(k)),
            ClosedLoopMap::Function(_) => None,
        }
    }
}

impl fmt::Debug for ClosedLoopMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClosedLoopMap::Linear(m) => f.debug_tuple("Linear").field(m).finish(),
            ClosedLoopMap::Function(_) => f.write_str("Function(..)"),
        }
    }
}

/// The defender-controlled map `f0` and the adversary-controlled map `f1`.
#[derive(Debug, Clone)]
pub struct ClosedLoopDynamics {
    dim: usize,
    pub f0: ClosedLoopMap,
    pub f1: ClosedLoopMap,
}

impl ClosedLoopDynamics {
    /// Time-invariant maps given as closures.
    pub fn time_invariant<F0, F1>(dim: usize, f0: F0, f1: F1) -> Self
    where
        F0: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        F1: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Self {
            dim,
            f0: ClosedLoopMap::Function(Arc::new(move |_, x| f0(x))),
            f1: ClosedLoopMap::Function(Arc::new(move |_, x| f1(x))),
        }
    }

    pub fn time_varying<F0, F1>(dim: usize, f0: F0, f1: F1) -> Self
    where
        F0: Fn(usize, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        F1: Fn(usize, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Self {
            dim,
            f0: ClosedLoopMap::Function(Arc::new(f0)),
            f1: ClosedLoopMap::Function(Arc::new(f1)),
        }
    }

    /// Linear closed loops `x -> M0_k x` and `x -> M1_k x`.
    pub fn linear(
        m0: Schedule<DMatrix<f64>>,
        m1: Schedule<DMatrix<f64>>,
    ) -> Result<Self, ModelError> {
        let dim = m0.at(0).nrows();
        for m in m0.iter().chain(m1.iter()) {
            if m.nrows() != dim {
                return Err(ModelError::DimensionMismatch {
                    expected: dim,
                    got: m.nrows(),
                });
            }
            if m.ncols() != dim {
                return Err(ModelError::DimensionMismatch {
                    expected: dim,
                    got: m.ncols(),
                });
            }
        }
        Ok(Self {
            dim,
            f0: ClosedLoopMap::Linear(m0),
            f1: ClosedLoopMap::Linear(m1),
        })
    }

    /// Finite game over states `0..n`, embedded as one-dimensional vectors
    /// holding the state index. `succ0[i]`/`succ1[i]` are the successors of `i`.
    pub fn from_successor_tables(succ0: Vec<usize>, succ1: Vec<usize>) -> Self {
        let lookup = |table: Vec<usize>| {
            move |x: &DVector<f64>| {
                let i = x[0] as usize;
                DVector::from_element(1, table[i] as f64)
            }
        };
        Self::time_invariant(1, lookup(succ0), lookup(succ1))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn map(&self, alpha: FlipState) -> &ClosedLoopMap {
        match alpha {
            FlipState::Defender => &self.f0,
            FlipState::Adversary => &self.f1,
        }
    }

    pub fn successor(
        &self,
        x: &PhysicalState,
        alpha: FlipState,
        k: usize,
    ) -> Result<PhysicalState, ModelError> {
        if x.dim() != self.dim {
            return Err(ModelError::DimensionMismatch {
                expected: self.dim,
                got: x.dim(),
            });
        }
        let next = self.map(alpha).apply(k, x.as_vector());
        if next.len() != self.dim {
            return Err(ModelError::DimensionMismatch {
                expected: self.dim,
                got: next.len(),
            });
        }
        PhysicalState::from_vector(next).map_err(|_| ModelError::NonFiniteSuccessor { k })
    }
}

/// A real-valued function of the physical state.
#[derive(Clone)]
pub enum StateCost {
    Quadratic(DMatrix<f64>),
    Function(Arc<StateCostFn>),
}

impl StateCost {
    pub fn function<F>(f: F) -> Self
    where
        F: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
    {
        StateCost::Function(Arc::new(f))
    }

    /// Lookup table over a finite game's state indices.
    pub fn table(values: Vec<f64>) -> Self {
        Self::function(move |x| values[x[0] as usize])
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        match self {
            StateCost::Quadratic(m) => x.dot(&(m * x)),
            StateCost::Function(f) => f(x),
        }
    }

    pub fn matrix(&self) -> Option<&DMatrix<f64>> {
        match self {
            StateCost::Quadratic(m) => Some(m),
            StateCost::Function(_) => None,
        }
    }
}

impl fmt::Debug for StateCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateCost::Quadratic(m) => f.debug_tuple("Quadratic").field(m).finish(),
            StateCost::Function(_) => f.write_str("Function(..)"),
        }
    }
}

/// Stage cost `g`, defender takeover cost `d` and adversary takeover cost `a`.
#[derive(Debug, Clone)]
pub struct CostModel {
    pub g: StateCost,
    pub d: StateCost,
    pub a: StateCost,
}

impl CostModel {
    pub fn new(g: StateCost, d: StateCost, a: StateCost) -> Self {
        Self { g, d, a }
    }

    pub fn quadratic(q: DMatrix<f64>, d: DMatrix<f64>, a: DMatrix<f64>) -> Self {
        Self::new(
            StateCost::Quadratic(q),
            StateCost::Quadratic(d),
            StateCost::Quadratic(a),
        )
    }

    pub fn from_tables(g: Vec<f64>, d: Vec<f64>, a: Vec<f64>) -> Self {
        Self::new(
            StateCost::table(g),
            StateCost::table(d),
            StateCost::table(a),
        )
    }
}

/// Values `V0_L` and `V1_L` assigned to the terminal state.
#[derive(Debug, Clone)]
pub struct TerminalCost {
    pub v0: StateCost,
    pub v1: StateCost,
}

impl TerminalCost {
    /// `V0_L = g`, `V1_L = g + max(a, d) + mu (1 + g)`.
    ///
    /// The adversary-side value exceeds the defender-side value by more than
    /// either takeover cost whenever `mu > 0`, so the mixed-equilibrium
    /// condition holds at step `L - 1` for any state-independent successor.
    pub fn standard(costs: &CostModel, mu: f64) -> Self {
        let (g0, g1, d, a) = (
            costs.g.clone(),
            costs.g.clone(),
            costs.d.clone(),
            costs.a.clone(),
        );
        Self {
            v0: StateCost::function(move |x| g0.eval(x)),
            v1: StateCost::function(move |x| {
                let gx = g1.eval(x);
                gx + d.eval(x).max(a.eval(x)) + mu * (1.0 + gx)
            }),
        }
    }

    /// Quadratic terminal values `x' P0 x` and `x' P1 x`.
    pub fn quadratic(p0: DMatrix<f64>, p1: DMatrix<f64>) -> Self {
        Self {
            v0: StateCost::Quadratic(p0),
            v1: StateCost::Quadratic(p1),
        }
    }

    pub fn value(&self, x: &DVector<f64>, alpha: FlipState) -> f64 {
        match alpha {
            FlipState::Defender => self.v0.eval(x),
            FlipState::Adversary => self.v1.eval(x),
        }
    }
}

/// Complete game instance.
#[derive(Debug, Clone)]
pub struct GameSpec {
    pub dynamics: ClosedLoopDynamics,
    pub costs: CostModel,
    pub terminal: TerminalCost,
    pub horizon: usize,
    pub x0: PhysicalState,
    pub alpha0: FlipState,
}

impl GameSpec {
    pub fn new(
        dynamics: ClosedLoopDynamics,
        costs: CostModel,
        terminal: TerminalCost,
        horizon: usize,
        x0: PhysicalState,
        alpha0: FlipState,
    ) -> Result<Self, ModelError> {
        if horizon == 0 {
            return Err(ModelError::ZeroHorizon);
        }
        if x0.dim() != dynamics.dim() {
            return Err(ModelError::DimensionMismatch {
                expected: dynamics.dim(),
                got: x0.dim(),
            });
        }
        Ok(Self {
            dynamics,
            costs,
            terminal,
            horizon,
            x0,
            alpha0,
        })
    }

    pub fn with_start(&self, x0: PhysicalState, alpha0: FlipState) -> Result<Self, ModelError> {
        Self::new(
            self.dynamics.clone(),
            self.costs.clone(),
            self.terminal.clone(),
            self.horizon,
            x0,
            alpha0,
        )
    }

    pub fn stage_cost(&self, x: &PhysicalState, actions: ActionPair) -> f64 {
        stage_cost(x, actions, &self.costs)
    }
}

/// FlipDyn state update: simultaneous moves (or no moves) keep the state,
/// a lone mover takes control.
pub fn flip_transition(alpha: FlipState, actions: ActionPair) -> FlipState {
    match (actions.defender, actions.adversary) {
        (Action::Takeover, Action::Idle) => FlipState::Defender,
        (Action::Idle, Action::Takeover) => FlipState::Adversary,
        _ => alpha,
    }
}

/// Next physical state under the post-transition FlipDyn state.
pub fn step_state(
    x: &PhysicalState,
    alpha_next: FlipState,
    dynamics: &ClosedLoopDynamics,
    k: usize,
) -> Result<PhysicalState, ModelError> {
    dynamics.successor(x, alpha_next, k)
}

/// `g(x) + d(x) 1{defender moves} - a(x) 1{adversary moves}`.
pub fn stage_cost(x: &PhysicalState, actions: ActionPair, costs: &CostModel) -> f64 {
    let v = x.as_vector();
    let mut cost = costs.g.eval(v);
    if actions.defender.is_takeover() {
        cost += costs.d.eval(v);
    }
    if actions.adversary.is_takeover() {
        cost -= costs.a.eval(v);
    }
    cost
}
