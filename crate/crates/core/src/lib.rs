//! Solver and simulator for the FlipDyn zero-sum takeover game over
//! discrete-time dynamical systems.
//!
//! Two players, a defender and an adversary, compete for control of a plant.
//! At each step each player may pay to take over; simultaneous moves cancel.
//! The crate computes equilibrium takeover policies and value functions:
//!
//! * [`finite`]: exact backward induction over finite state sets and
//!   reachable trees,
//! * [`lq_scalar`]: closed-form coefficients for scalar linear-quadratic games,
//! * [`lq_nd`]: quadratic value approximation for n-dimensional LQ games,
//!
//! and rolls out the resulting hybrid closed loop in [`simulator`].

/// Library version recorded in result metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod experiments;
pub mod finite;
pub mod linalg;
pub mod lq_nd;
pub mod lq_scalar;
pub mod lqr;
pub mod matrix_game;
pub mod model;
pub mod simulator;

pub use finite::{
    backward_induction, evaluate_value_tree, SolverError, StateEnumeration, ValueTables, ValueTree,
};
pub use lq_nd::{nd_backward_recursion, nd_policy, NdLQParams, NdValueMatrices};
pub use lq_scalar::{
    scalar_backward_recursion, scalar_policy, scalar_value_at, LqError, ScalarLQParams,
    ScalarValueCoeffs, ValidityMode,
};
pub use lqr::{build_linear_game, lqr_gain, LqrError, LqrWeights};
pub use matrix_game::{GameError, GameSolution2, PayoffMatrix2, SolutionKind};
pub use model::{
    flip_transition, stage_cost, step_state, Action, ActionPair, ClosedLoopDynamics, CostModel,
    FlipState, GameSpec, MixedPolicy2, ModelError, PhysicalState, Schedule, StateCost,
    TerminalCost,
};
pub use simulator::{
    expected_cost_exhaustive, monte_carlo, rollout, AggregateStats, PolicyProvider, RolloutConfig,
    SimError, TrajectoryRecord,
};
