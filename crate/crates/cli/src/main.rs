use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flipdyn::lq_scalar::ValidityMode;
use flipdyn_cli::config::{config_hash, parse_config, read_config};
use flipdyn_cli::{run_experiment, CliError, Command, ExperimentConfig, ResultsBundle};

/// Reference experiments run by `flipdyn experiment` without `--config`.
const REFERENCE: &[(&str, &str)] = &[
    (
        "scalar_bounded",
        include_str!("../configs/scalar_bounded.toml"),
    ),
    (
        "scalar_unbounded",
        include_str!("../configs/scalar_unbounded.toml"),
    ),
    ("nd_bounded", include_str!("../configs/nd_bounded.toml")),
    ("nd_unbounded", include_str!("../configs/nd_unbounded.toml")),
    ("recovery", include_str!("../configs/recovery.toml")),
    (
        "recovery_costly_defense",
        include_str!("../configs/recovery_costly_defense.toml"),
    ),
];

const DEFAULT_OUT: &str = "flipdyn-out";

#[derive(Parser)]
#[command(
    name = "flipdyn",
    version,
    about = "Solve and simulate FlipDyn takeover games"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Scalar LQ coefficients and policies.
    SolveScalar(Common),
    /// n-dimensional LQ value matrices.
    SolveNd(Common),
    /// Exact backward induction over a finite state set.
    SolveFinite(Common),
    /// Monte Carlo rollouts of the equilibrium policies.
    Simulate(Common),
    /// Solver and simulation outputs together; without --config, the
    /// reference bundle.
    Experiment(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory [default: config output.dir, else ./flipdyn-out]
    #[arg(long, env = "FLIPDYN_OUT_DIR")]
    out: Option<PathBuf>,
    /// Overrides simulation.seed
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, conflicts_with = "permissive")]
    strict: bool,
    #[arg(long)]
    permissive: bool,
}

impl Common {
    fn apply(&self, config: &mut ExperimentConfig) {
        if let (Some(seed), Some(sim)) = (self.seed, config.simulation.as_mut()) {
            sim.seed = seed;
        }
        if self.strict {
            config.validity = ValidityMode::Strict;
        }
        if self.permissive {
            config.validity = ValidityMode::Permissive;
        }
    }

    fn out_dir(&self, config: &ExperimentConfig) -> PathBuf {
        self.out
            .clone()
            .or_else(|| config.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }
}

fn report(bundle: &ResultsBundle, files: &[PathBuf]) {
    let m = &bundle.metadata;
    println!("{} ({} mode, {:?})", m.command, m.mode, m.validity);
    if let Some(s) = &bundle.scalar {
        let c = &s.coefficients;
        println!(
            "  p0[0] = {:.6e}, p1[0] = {:.6e}, all valid: {}",
            c.p0[0],
            c.p1[0],
            c.all_valid()
        );
    }
    if let Some(n) = &bundle.nd {
        println!(
            "  min eig P0[0] = {:.6e}, P1[0] = {:.6e}, all valid: {}",
            n.min_eig_p0[0],
            n.min_eig_p1[0],
            n.matrices.all_valid()
        );
    }
    if let Some(t) = &bundle.finite {
        println!("  states: {}, horizon: {}", t.v0[0].len(), t.horizon);
    }
    if let Some(sim) = &bundle.simulation {
        println!(
            "  {} runs, mean cost {:.6e} (se {:.2e})",
            sim.stats.runs, sim.stats.mean_cost, sim.stats.cost_std_error
        );
    }
    for f in files {
        println!("  wrote {}", f.display());
    }
}

fn run_one(
    command: Command,
    args: &Common,
    mut config: ExperimentConfig,
    hash: &str,
    out: &Path,
) -> Result<(), CliError> {
    args.apply(&mut config);
    let (bundle, files) = run_experiment(&config, command, hash, out)?;
    report(&bundle, &files);
    Ok(())
}

fn dispatch(command: Command, args: &Common) -> Result<(), CliError> {
    match &args.config {
        Some(path) => {
            let (config, hash) = read_config(path)?;
            let out = args.out_dir(&config);
            run_one(command, args, config, &hash, &out)
        }
        None if command == Command::Experiment => {
            let root = args
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
            for (name, text) in REFERENCE {
                let config = parse_config(text, name)?;
                run_one(
                    command,
                    args,
                    config,
                    &config_hash(text.as_bytes()),
                    &root.join(name),
                )?;
            }
            Ok(())
        }
        None => Err(CliError::Usage(format!(
            "{} needs --config <path>",
            command.name()
        ))),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match &cli.command {
        Cmd::SolveScalar(a) => (Command::SolveScalar, a),
        Cmd::SolveNd(a) => (Command::SolveNd, a),
        Cmd::SolveFinite(a) => (Command::SolveFinite, a),
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Experiment(a) => (Command::Experiment, a),
    };
    match dispatch(command, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
