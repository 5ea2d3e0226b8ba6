//! Dispatch from a validated config to the solvers and the simulator.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use flipdyn::finite::{backward_induction, StateEnumeration};
use flipdyn::lq_nd::{nd_backward_recursion, NdLQParams};
use flipdyn::lq_scalar::{scalar_backward_recursion, ScalarLQParams};
use flipdyn::lqr::{lqr_gain, LqrWeights};
use flipdyn::model::{ClosedLoopDynamics, CostModel, GameSpec, PhysicalState, TerminalCost};
use flipdyn::simulator::{
    monte_carlo, rollout, NdPolicy, PolicyProvider, RolloutConfig, ScalarPolicy, TabularPolicy,
    RNG_ID,
};
use nalgebra::{DMatrix, DVector};

use crate::config::{
    flip_state, from_dmatrix, nd_plant, to_dmatrix, ExperimentConfig, FiniteConfig, Mode, NdConfig,
    ScalarConfig, SimulationConfig,
};
use crate::results::{Metadata, NdResults, ResultsBundle, ScalarResults, SimulationResults};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    SolveScalar,
    SolveNd,
    SolveFinite,
    Simulate,
    Experiment,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SolveScalar => "solve-scalar",
            Command::SolveNd => "solve-nd",
            Command::SolveFinite => "solve-finite",
            Command::Simulate => "simulate",
            Command::Experiment => "experiment",
        }
    }

    fn required_mode(self) -> Option<Mode> {
        match self {
            Command::SolveScalar => Some(Mode::Scalar),
            Command::SolveNd => Some(Mode::Nd),
            Command::SolveFinite => Some(Mode::Finite),
            _ => None,
        }
    }
}

/// Solve (and simulate, when the command asks for it) without touching disk.
pub fn compute(
    config: &ExperimentConfig,
    command: Command,
    config_sha256: &str,
) -> Result<ResultsBundle, CliError> {
    if let Some(mode) = command.required_mode() {
        if config.mode() != mode {
            return Err(CliError::Usage(format!(
                "{} needs a [{mode}] config, got [{}]",
                command.name(),
                config.mode()
            )));
        }
    }
    let simulate = match command {
        Command::Simulate => {
            if config.simulation.is_none() {
                return Err(CliError::Usage(
                    "simulate needs a [simulation] block".into(),
                ));
            }
            true
        }
        Command::Experiment => config.simulation.is_some(),
        _ => false,
    };
    let sim = config.simulation.as_ref().filter(|_| simulate);
    let mut bundle = ResultsBundle {
        metadata: Metadata {
            config_sha256: config_sha256.to_owned(),
            library_version: flipdyn::VERSION.to_owned(),
            rng: RNG_ID.to_owned(),
            command: command.name().to_owned(),
            mode: config.mode(),
            validity: config.validity,
            seed: sim.map(|s| s.seed),
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            files: Vec::new(),
        },
        scalar: None,
        nd: None,
        finite: None,
        simulation: None,
    };
    match config.mode() {
        Mode::Scalar => run_scalar(config, config.scalar.as_ref().unwrap(), sim, &mut bundle)?,
        Mode::Nd => run_nd(config, config.nd.as_ref().unwrap(), sim, &mut bundle)?,
        Mode::Finite => run_finite(config, config.finite.as_ref().unwrap(), sim, &mut bundle)?,
    }
    Ok(bundle)
}

/// Compute and write all outputs for `command` into `out_dir`.
pub fn run_experiment(
    config: &ExperimentConfig,
    command: Command,
    config_sha256: &str,
    out_dir: &Path,
) -> Result<(ResultsBundle, Vec<PathBuf>), CliError> {
    let mut bundle = compute(config, command, config_sha256)?;
    let files = bundle.write(out_dir, command != Command::Simulate)?;
    Ok((bundle, files))
}

fn simulate<P: PolicyProvider + ?Sized>(
    spec: &GameSpec,
    policy: &P,
    sim: &SimulationConfig,
) -> Result<SimulationResults, CliError> {
    let mut rc = RolloutConfig::new(sim.seed, sim.runs);
    rc.record_policies = sim.record_policies;
    for ev in &sim.forced_events {
        rc = rc.with_forced(ev.k, flip_state(ev.alpha));
    }
    let stats = monte_carlo(spec, policy, &rc)?;
    let trajectories = (0..sim.trajectories)
        .map(|run| rollout(spec, policy, &rc, run))
        .collect::<Result<_, _>>()?;
    Ok(SimulationResults {
        stats,
        trajectories,
    })
}

pub fn scalar_params(
    config: &ExperimentConfig,
    s: &ScalarConfig,
) -> Result<ScalarLQParams, CliError> {
    let k = match (s.k, s.lqr) {
        (Some(k), _) => k,
        (None, Some(l)) => {
            let one = |v| DMatrix::from_element(1, 1, v);
            lqr_gain(&one(s.f), &one(s.b), &LqrWeights::new(one(l.qc), one(l.rc)))?[(0, 0)]
        }
        (None, None) => unreachable!("validated config has k or lqr"),
    };
    Ok(s.params(k, config.mu, config.horizon)?)
}

fn run_scalar(
    config: &ExperimentConfig,
    s: &ScalarConfig,
    sim: Option<&SimulationConfig>,
    bundle: &mut ResultsBundle,
) -> Result<(), CliError> {
    let params = scalar_params(config, s)?;
    let coeffs = scalar_backward_recursion(&params, config.validity)?;
    let l = coeffs.horizon();
    bundle.scalar = Some(ScalarResults {
        beta_star: (0..l).map(|k| coeffs.beta_star(k, s.a)).collect(),
        gamma_star: (0..l).map(|k| coeffs.gamma_star(k, s.d)).collect(),
        coefficients: coeffs.clone(),
    });
    if let Some(sim) = sim {
        let spec = params.game_spec(s.x0, flip_state(s.alpha0))?;
        let policy = ScalarPolicy {
            coeffs: &coeffs,
            params: &params,
        };
        bundle.simulation = Some(simulate(&spec, &policy, sim)?);
    }
    Ok(())
}

pub fn nd_params(config: &ExperimentConfig, n: &NdConfig) -> Result<NdLQParams, CliError> {
    let (f, b) = nd_plant(n).expect("validated plant");
    let mat =
        |m: &Option<Vec<Vec<f64>>>| m.as_ref().map(|m| to_dmatrix(m).expect("validated matrix"));
    let e = mat(&n.e);
    let p = e.as_ref().map_or(b.ncols(), |e| e.ncols());
    let w = mat(&n.w).unwrap_or_else(|| DMatrix::zeros(p, f.nrows()));
    let k = match (&n.k, &n.lqr) {
        (Some(k), _) => to_dmatrix(k).expect("validated gain"),
        (None, Some(l)) => {
            let weights = LqrWeights::new(
                to_dmatrix(&l.qc).expect("validated qc"),
                to_dmatrix(&l.rc).expect("validated rc"),
            );
            lqr_gain(&f, &b, &weights)?
        }
        (None, None) => unreachable!("validated config has k or lqr"),
    };
    let params = NdLQParams::new(
        f,
        b,
        k,
        w,
        to_dmatrix(&n.q).expect("validated q"),
        to_dmatrix(&n.d).expect("validated d"),
        to_dmatrix(&n.a).expect("validated a"),
        config.mu,
        config.horizon,
    )?;
    Ok(match e {
        Some(e) => params.with_e(e.into())?,
        None => params,
    })
}

fn run_nd(
    config: &ExperimentConfig,
    n: &NdConfig,
    sim: Option<&SimulationConfig>,
    bundle: &mut ResultsBundle,
) -> Result<(), CliError> {
    let params = nd_params(config, n)?;
    let matrices = nd_backward_recursion(&params, config.validity)?;
    bundle.nd = Some(NdResults {
        gain: from_dmatrix(params.k.at(0)),
        min_eig_p0: matrices.min_eig_p0(),
        min_eig_p1: matrices.min_eig_p1(),
        min_eig_pcheck: matrices.min_eig_pcheck(),
        matrices: matrices.clone(),
    });
    if let Some(sim) = sim {
        let spec = params.game_spec(DVector::from_column_slice(&n.x0), flip_state(n.alpha0))?;
        let policy = NdPolicy {
            matrices: &matrices,
            params: &params,
        };
        bundle.simulation = Some(simulate(&spec, &policy, sim)?);
    }
    Ok(())
}

fn run_finite(
    config: &ExperimentConfig,
    f: &FiniteConfig,
    sim: Option<&SimulationConfig>,
    bundle: &mut ResultsBundle,
) -> Result<(), CliError> {
    let n = f.g.len();
    let dynamics = ClosedLoopDynamics::from_successor_tables(f.succ0.clone(), f.succ1.clone());
    let costs = CostModel::from_tables(f.g.clone(), f.d.clone(), f.a.clone());
    let terminal = TerminalCost::standard(&costs, config.mu);
    let x0 = PhysicalState::scalar(f.x0 as f64)?;
    let spec = GameSpec::new(
        dynamics.clone(),
        costs,
        terminal,
        config.horizon,
        x0,
        flip_state(f.alpha0),
    )?;
    let enumeration = StateEnumeration::indexed(n, &dynamics, config.horizon)?;
    let tables = backward_induction(&spec, &enumeration)?;
    if let Some(sim) = sim {
        let policy = TabularPolicy {
            tables: &tables,
            enumeration: &enumeration,
        };
        bundle.simulation = Some(simulate(&spec, &policy, sim)?);
    }
    bundle.finite = Some(tables);
    Ok(())
}
