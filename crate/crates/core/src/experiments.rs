//! Reference setups: coefficient trends for scalar and double-integrator
//! plants, and the recovery-of-control simulation.
//!
//! Cost magnitudes are reconstructions (`g = 1`, `d = 0.5`, `a = 0.9`,
//! `Q = I`, `D = 0.5 I`, `A = 0.9 I`, `mu = 1`); they are defaults, not
//! measured values.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::lq_nd::{nd_backward_recursion, NdLQParams, NdValueMatrices};
use crate::lq_scalar::{LqError, ScalarLQParams, ValidityMode};
use crate::lqr::{lqr_gain, LqrError, LqrWeights};
use crate::model::FlipState;
use crate::simulator::{monte_carlo, AggregateStats, NdPolicy, RolloutConfig, SimError};

pub const SCALAR_G: f64 = 1.0;
pub const SCALAR_D: f64 = 0.5;
pub const SCALAR_A: f64 = 0.9;
pub const DEFAULT_MU: f64 = 1.0;
/// Defender closed loop `F - BK` used by the scalar trend runs.
pub const SCALAR_DEFENDER_LOOP: f64 = 0.9;
pub const SAMPLE_TIME: f64 = 0.1;
pub const ND_HORIZON: usize = 100;
pub const RECOVERY_STEP: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error(transparent)]
    Lq(#[from] LqError),
    #[error(transparent)]
    Lqr(#[from] LqrError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Scalar plant with adversary loop `F = f`, `W = 0`, and defender loop
/// `F - BK = 0.9`.
pub fn scalar_trend_params(f: f64, horizon: usize) -> Result<ScalarLQParams, LqError> {
    ScalarLQParams::new(
        f,
        1.0,
        f - SCALAR_DEFENDER_LOOP,
        0.0,
        SCALAR_G,
        SCALAR_D,
        SCALAR_A,
        DEFAULT_MU,
        horizon,
    )
}

/// `F = [[f, dt], [0, f]]`, `B = [dt^2 / 2, dt]'`.
pub fn double_integrator(f_hat: f64, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    (
        DMatrix::from_row_slice(2, 2, &[f_hat, dt, 0.0, f_hat]),
        DMatrix::from_row_slice(2, 1, &[0.5 * dt * dt, dt]),
    )
}

/// Double integrator with the LQR gain for `Qc = I`, `Rc = 1`, `W = 0`,
/// `Q = I` and the given takeover cost scales.
pub fn nd_trend_params(
    f_hat: f64,
    d_scale: f64,
    a_scale: f64,
    horizon: usize,
) -> Result<NdLQParams, ExperimentError> {
    let (f, b) = double_integrator(f_hat, SAMPLE_TIME);
    let k = lqr_gain(&f, &b, &LqrWeights::identity(2, 1))?;
    let eye = DMatrix::identity(2, 2);
    Ok(NdLQParams::new(
        f,
        b,
        k,
        DMatrix::zeros(1, 2),
        eye.clone(),
        &eye * d_scale,
        &eye * a_scale,
        DEFAULT_MU,
        horizon,
    )?)
}

pub fn recovery_initial_state() -> DVector<f64> {
    DVector::from_vec(vec![0.0, 1.0])
}

#[derive(Debug, Clone)]
pub struct RecoveryResult {
    pub params: NdLQParams,
    pub matrices: NdValueMatrices,
    pub stats: AggregateStats,
}

/// Monte Carlo of the double-integrator game from `x0 = [0, 1]'`, defender in
/// control, with control handed to the adversary at step 10.
pub fn recovery_experiment(
    f_hat: f64,
    d_scale: f64,
    a_scale: f64,
    runs: usize,
    seed: u64,
) -> Result<RecoveryResult, ExperimentError> {
    let params = nd_trend_params(f_hat, d_scale, a_scale, ND_HORIZON)?;
    let matrices = nd_backward_recursion(&params, ValidityMode::Permissive)?;
    let spec = params.game_spec(recovery_initial_state(), FlipState::Defender)?;
    let policy = NdPolicy {
        matrices: &matrices,
        params: &params,
    };
    let config = RolloutConfig::new(seed, runs).with_forced(RECOVERY_STEP, FlipState::Adversary);
    let stats = monte_carlo(&spec, &policy, &config)?;
    Ok(RecoveryResult {
        params,
        matrices,
        stats,
    })
}

/// Least-squares slope of `ys` against `0, 1, 2, ...`.
pub fn ls_slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let (num, den) = ys
        .iter()
        .enumerate()
        .fold((0.0, 0.0), |(num, den), (i, y)| {
            let dx = i as f64 - mx;
            (num + dx * (y - my), den + dx * dx)
        });
    num / den
}
