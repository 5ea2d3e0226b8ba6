//! Exact backward induction of the coupled value functions `V0_k`, `V1_k`.
//!
//! [`backward_induction`] works over a finite, closed state enumeration.
//! [`evaluate_value_tree`] applies the same per-state rule to the (at most
//! `2^(L-k)`-wide) tree of states reachable from `x0`, which makes it usable
//! for continuous states at short horizons.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix_game::{self, GameError, PayoffMatrix2, SolutionKind};
use crate::model::{
    ClosedLoopDynamics, CostModel, FlipState, GameSpec, MixedPolicy2, ModelError, PhysicalState,
    StateKey,
};

/// Default horizon cap for [`evaluate_value_tree`].
pub const DEFAULT_TREE_CAP: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("step {k}, state {state}: {source}")]
    Game {
        k: usize,
        state: usize,
        source: GameError,
    },
    #[error("enumeration not closed: successor of state {state} under alpha={alpha} at step {k} is missing")]
    EnumerationNotClosed {
        k: usize,
        state: usize,
        alpha: FlipState,
    },
    #[error("duplicate state {0} in enumeration")]
    DuplicateState(usize),
    #[error("horizon {horizon} exceeds the cap {cap}")]
    HorizonCapExceeded { horizon: usize, cap: usize },
    #[error("enumeration was built for horizon {built}, game has horizon {game}")]
    HorizonMismatch { built: usize, game: usize },
}

/// Continuation values entering the cost-to-go matrices at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Continuation {
    /// `V0_{k+1}(f0_k(x))`
    pub v0_f0: f64,
    /// `V1_{k+1}(f1_k(x))`
    pub v1_f1: f64,
}

impl Continuation {
    /// Value advantage of adversary control, `V1(f1) - V0(f0)`.
    pub fn gap(&self) -> f64 {
        self.v1_f1 - self.v0_f0
    }
}

/// The two cost-to-go matrices for takeover costs `d`, `a` at one state.
/// Rows are the defender's (idle, takeover), columns the adversary's.
pub fn cost_to_go_matrices(c: Continuation, d: f64, a: f64) -> (PayoffMatrix2, PayoffMatrix2) {
    let Continuation { v0_f0, v1_f1 } = c;
    let xi0 = PayoffMatrix2::new(v0_f0, v1_f1 - a, v0_f0 + d, v0_f0 + d - a);
    let xi1 = PayoffMatrix2::new(v1_f1, v1_f1 - a, v0_f0 + d, v1_f1 + d - a);
    (xi0, xi1)
}

/// Strict gap condition under which neither player has a dominated action.
pub fn mixed_condition(c: Continuation, d: f64, a: f64) -> bool {
    c.v1_f1 > c.v0_f0 + d.max(a)
}

fn continuation_at<V0, V1>(
    x: &PhysicalState,
    k: usize,
    v0_next: V0,
    v1_next: V1,
    dynamics: &ClosedLoopDynamics,
) -> Result<Continuation, SolverError>
where
    V0: Fn(&PhysicalState) -> Option<f64>,
    V1: Fn(&PhysicalState) -> Option<f64>,
{
    let x0 = dynamics.successor(x, FlipState::Defender, k)?;
    let x1 = dynamics.successor(x, FlipState::Adversary, k)?;
    let missing = |alpha| SolverError::EnumerationNotClosed { k, state: 0, alpha };
    Ok(Continuation {
        v0_f0: v0_next(&x0).ok_or_else(|| missing(FlipState::Defender))?,
        v1_f1: v1_next(&x1).ok_or_else(|| missing(FlipState::Adversary))?,
    })
}

/// Cost-to-go matrices at `x`, reading step-`k+1` values through accessors.
pub fn build_payoff_matrices<V0, V1>(
    x: &PhysicalState,
    k: usize,
    v0_next: V0,
    v1_next: V1,
    costs: &CostModel,
    dynamics: &ClosedLoopDynamics,
) -> Result<(PayoffMatrix2, PayoffMatrix2), SolverError>
where
    V0: Fn(&PhysicalState) -> Option<f64>,
    V1: Fn(&PhysicalState) -> Option<f64>,
{
    let c = continuation_at(x, k, v0_next, v1_next, dynamics)?;
    let v = x.as_vector();
    Ok(cost_to_go_matrices(c, costs.d.eval(v), costs.a.eval(v)))
}

pub fn mixed_condition_holds<V0, V1>(
    x: &PhysicalState,
    v0_next: V0,
    v1_next: V1,
    costs: &CostModel,
    dynamics: &ClosedLoopDynamics,
    k: usize,
) -> Result<bool, SolverError>
where
    V0: Fn(&PhysicalState) -> Option<f64>,
    V1: Fn(&PhysicalState) -> Option<f64>,
{
    let c = continuation_at(x, k, v0_next, v1_next, dynamics)?;
    let v = x.as_vector();
    Ok(mixed_condition(c, costs.d.eval(v), costs.a.eval(v)))
}

/// Equilibrium of one FlipDyn state's one-step game.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatePolicy {
    pub defender: MixedPolicy2,
    pub adversary: MixedPolicy2,
    pub kind: SolutionKind,
    /// Whether the strict gap condition held; when false the cell was solved
    /// by the general 2x2 fallback.
    pub mixed_condition: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSolution {
    pub v0: f64,
    pub v1: f64,
    pub policies: [StatePolicy; 2],
}

/// Solve both FlipDyn states' one-step games at a state with stage cost `g`
/// and takeover costs `d`, `a`.
///
/// Where the gap condition holds the values use the closed forms
/// `V0 = g + d + V0(f0) - d a / gap` and `V1 = g - a + V1(f1) + d a / gap`;
/// elsewhere they are `g` plus the 2x2 game value.
pub fn solve_cell(c: Continuation, g: f64, d: f64, a: f64) -> Result<CellSolution, GameError> {
    let (xi0, xi1) = cost_to_go_matrices(c, d, a);
    let s0 = matrix_game::solve(&xi0)?;
    let s1 = matrix_game::solve(&xi1)?;
    let mixed = mixed_condition(c, d, a);
    let (v0, v1) = if mixed {
        let gap = c.gap();
        (g + d + c.v0_f0 - d * a / gap, g - a + c.v1_f1 + d * a / gap)
    } else {
        (g + s0.value, g + s1.value)
    };
    let pol = |s: matrix_game::GameSolution2| StatePolicy {
        defender: s.row_policy,
        adversary: s.col_policy,
        kind: s.kind,
        mixed_condition: mixed,
    };
    Ok(CellSolution {
        v0,
        v1,
        policies: [pol(s0), pol(s1)],
    })
}

fn solve_cell_at(
    x: &PhysicalState,
    c: Continuation,
    costs: &CostModel,
) -> Result<CellSolution, GameError> {
    let v = x.as_vector();
    solve_cell(c, costs.g.eval(v), costs.d.eval(v), costs.a.eval(v))
}

/// Finite state set closed under both closed-loop maps.
#[derive(Debug, Clone)]
pub struct StateEnumeration {
    states: Vec<PhysicalState>,
    index: HashMap<StateKey, usize>,
    /// `successors[k][i] = [id of f0_k(x_i), id of f1_k(x_i)]`
    successors: Vec<Vec<[usize; 2]>>,
}

impl StateEnumeration {
    pub fn new(
        states: Vec<PhysicalState>,
        dynamics: &ClosedLoopDynamics,
        horizon: usize,
    ) -> Result<Self, SolverError> {
        let mut index = HashMap::with_capacity(states.len());
        for (i, s) in states.iter().enumerate() {
            if index.insert(s.key(), i).is_some() {
                return Err(SolverError::DuplicateState(i));
            }
        }
        let mut successors = Vec::with_capacity(horizon);
        for k in 0..horizon {
            let row = states
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let mut ids = [0usize; 2];
                    for alpha in FlipState::BOTH {
                        let next = dynamics.successor(s, alpha, k)?;
                        ids[alpha.index()] = *index
                            .get(&next.key())
                            .ok_or(SolverError::EnumerationNotClosed { k, state: i, alpha })?;
                    }
                    Ok(ids)
                })
                .collect::<Result<Vec<_>, SolverError>>()?;
            successors.push(row);
        }
        Ok(Self {
            states,
            index,
            successors,
        })
    }

    /// States `0..n` of a tabular game (see
    /// [`ClosedLoopDynamics::from_successor_tables`]).
    pub fn indexed(
        n: usize,
        dynamics: &ClosedLoopDynamics,
        horizon: usize,
    ) -> Result<Self, SolverError> {
        let states = (0..n)
            .map(|i| PhysicalState::scalar(i as f64))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(states, dynamics, horizon)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[PhysicalState] {
        &self.states
    }

    pub fn id_of(&self, x: &PhysicalState) -> Option<usize> {
        self.index.get(&x.key()).copied()
    }

    pub fn successor(&self, k: usize, id: usize, alpha: FlipState) -> usize {
        self.successors[k][id][alpha.index()]
    }

    pub fn horizon(&self) -> usize {
        self.successors.len()
    }
}

/// Value functions and equilibrium policies over a state enumeration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValueTables {
    pub horizon: usize,
    /// `v0[k][i] = V0_k(x_i)`, `k = 0..=L`
    pub v0: Vec<Vec<f64>>,
    pub v1: Vec<Vec<f64>>,
    /// `policies[k][i][alpha]` for `k = 0..L`
    pub policies: Vec<Vec<[StatePolicy; 2]>>,
}

impl ValueTables {
    pub fn value(&self, k: usize, id: usize, alpha: FlipState) -> f64 {
        match alpha {
            FlipState::Defender => self.v0[k][id],
            FlipState::Adversary => self.v1[k][id],
        }
    }

    pub fn policy(&self, k: usize, id: usize, alpha: FlipState) -> &StatePolicy {
        &self.policies[k][id][alpha.index()]
    }
}

/// Backward induction from the terminal values of `spec.terminal`.
/// Cells within a step are solved in parallel; the result does not depend on
/// scheduling.
pub fn backward_induction(
    spec: &GameSpec,
    enumeration: &StateEnumeration,
) -> Result<ValueTables, SolverError> {
    let l = spec.horizon;
    if enumeration.horizon() < l {
        return Err(SolverError::HorizonMismatch {
            built: enumeration.horizon(),
            game: l,
        });
    }
    let n = enumeration.len();
    let mut v0 = vec![Vec::new(); l + 1];
    let mut v1 = vec![Vec::new(); l + 1];
    let mut policies = vec![Vec::new(); l];
    v0[l] = enumeration
        .states()
        .iter()
        .map(|x| spec.terminal.value(x.as_vector(), FlipState::Defender))
        .collect();
    v1[l] = enumeration
        .states()
        .iter()
        .map(|x| spec.terminal.value(x.as_vector(), FlipState::Adversary))
        .collect();

    for k in (0..l).rev() {
        let (next0, next1) = (&v0[k + 1], &v1[k + 1]);
        let cells = (0..n)
            .into_par_iter()
            .map(|i| {
                let c = Continuation {
                    v0_f0: next0[enumeration.successor(k, i, FlipState::Defender)],
                    v1_f1: next1[enumeration.successor(k, i, FlipState::Adversary)],
                };
                solve_cell_at(&enumeration.states()[i], c, &spec.costs).map_err(|source| {
                    SolverError::Game {
                        k,
                        state: i,
                        source,
                    }
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        v0[k] = cells.iter().map(|c| c.v0).collect();
        v1[k] = cells.iter().map(|c| c.v1).collect();
        policies[k] = cells.iter().map(|c| c.policies).collect();
    }
    Ok(ValueTables {
        horizon: l,
        v0,
        v1,
        policies,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub state: PhysicalState,
    pub v0: f64,
    pub v1: f64,
    /// `None` at the terminal step.
    pub policies: Option<[StatePolicy; 2]>,
}

/// Values over the tree of states reachable from `x0`, memoized by the exact
/// bit pattern of each state.
#[derive(Debug, Clone)]
pub struct ValueTree {
    pub horizon: usize,
    pub v0: f64,
    pub v1: f64,
    nodes: HashMap<(usize, StateKey), TreeNode>,
}

impl ValueTree {
    pub fn node(&self, k: usize, x: &PhysicalState) -> Option<&TreeNode> {
        self.nodes.get(&(k, x.key()))
    }

    pub fn nodes(&self) -> impl Iterator<Item = (usize, &TreeNode)> {
        self.nodes.iter().map(|((k, _), n)| (*k, n))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value_at_root(&self, alpha: FlipState) -> f64 {
        match alpha {
            FlipState::Defender => self.v0,
            FlipState::Adversary => self.v1,
        }
    }
}

pub fn evaluate_value_tree(spec: &GameSpec, cap: usize) -> Result<ValueTree, SolverError> {
    if spec.horizon > cap {
        return Err(SolverError::HorizonCapExceeded {
            horizon: spec.horizon,
            cap,
        });
    }
    let mut nodes = HashMap::new();
    let (v0, v1) = tree_node(spec, 0, &spec.x0, &mut nodes)?;
    Ok(ValueTree {
        horizon: spec.horizon,
        v0,
        v1,
        nodes,
    })
}

fn tree_node(
    spec: &GameSpec,
    k: usize,
    x: &PhysicalState,
    memo: &mut HashMap<(usize, StateKey), TreeNode>,
) -> Result<(f64, f64), SolverError> {
    let key = (k, x.key());
    if let Some(n) = memo.get(&key) {
        return Ok((n.v0, n.v1));
    }
    let node = if k == spec.horizon {
        let v = x.as_vector();
        TreeNode {
            state: x.clone(),
            v0: spec.terminal.value(v, FlipState::Defender),
            v1: spec.terminal.value(v, FlipState::Adversary),
            policies: None,
        }
    } else {
        let x0 = spec.dynamics.successor(x, FlipState::Defender, k)?;
        let x1 = spec.dynamics.successor(x, FlipState::Adversary, k)?;
        let (v0_f0, _) = tree_node(spec, k + 1, &x0, memo)?;
        let (_, v1_f1) = tree_node(spec, k + 1, &x1, memo)?;
        let cell =
            solve_cell_at(x, Continuation { v0_f0, v1_f1 }, &spec.costs).map_err(|source| {
                SolverError::Game {
                    k,
                    state: 0,
                    source,
                }
            })?;
        TreeNode {
            state: x.clone(),
            v0: cell.v0,
            v1: cell.v1,
            policies: Some(cell.policies),
        }
    };
    let out = (node.v0, node.v1);
    memo.insert(key, node);
    Ok(out)
}
