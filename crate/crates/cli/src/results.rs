//! Result bundle and its on-disk form: CSV tables plus `results.json`.
//!
//! Every float is written as `{:.16e}` (17 significant digits), so values
//! round-trip exactly. Booleans and FlipDyn states are written as `0`/`1`.
//! Columns that do not exist at the terminal step are left empty.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use flipdyn::finite::ValueTables;
use flipdyn::lq_nd::NdValueMatrices;
use flipdyn::lq_scalar::{ScalarValueCoeffs, ValidityMode};
use flipdyn::model::FlipState;
use flipdyn::simulator::{AggregateStats, TrajectoryRecord};
use serde::Serialize;
use tempfile::NamedTempFile;

use crate::config::{Matrix, Mode};
use crate::CliError;

pub const COEFFICIENTS_FILE: &str = "coefficients.csv";
pub const POLICIES_FILE: &str = "policies.csv";
pub const ND_FILE: &str = "nd.csv";
pub const VALUES_FILE: &str = "values.csv";
pub const SIMULATION_FILE: &str = "simulation.csv";
pub const TRAJECTORY_FILE: &str = "trajectories.csv";
pub const RESULTS_FILE: &str = "results.json";

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub config_sha256: String,
    pub library_version: String,
    pub rng: String,
    pub command: String,
    pub mode: Mode,
    pub validity: ValidityMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Seconds since the Unix epoch; the only field that varies between
    /// identical runs.
    pub created_unix: u64,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalarResults {
    pub coefficients: ScalarValueCoeffs,
    pub beta_star: Vec<f64>,
    pub gamma_star: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NdResults {
    /// Defender gain actually used (given or synthesised).
    pub gain: Matrix,
    pub min_eig_p0: Vec<f64>,
    pub min_eig_p1: Vec<f64>,
    pub min_eig_pcheck: Vec<f64>,
    pub matrices: NdValueMatrices,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationResults {
    pub stats: AggregateStats,
    #[serde(skip)]
    pub trajectories: Vec<TrajectoryRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResultsBundle {
    pub metadata: Metadata,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scalar: Option<ScalarResults>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nd: Option<NdResults>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finite: Option<ValueTables>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationResults>,
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_num(x: Option<&f64>) -> String {
    x.map_or_else(String::new, |v| num(*v))
}

fn opt_bit(x: Option<&bool>) -> &'static str {
    match x {
        Some(true) => "1",
        Some(false) => "0",
        None => "",
    }
}

fn bit(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// `k,p0,p1,ptilde,valid` for `k = 0..=L`.
pub fn coefficients_csv(c: &ScalarValueCoeffs) -> String {
    let mut s = String::from("k,p0,p1,ptilde,valid\n");
    for k in 0..c.p0.len() {
        writeln!(
            s,
            "{k},{},{},{},{}",
            num(c.p0[k]),
            num(c.p1[k]),
            opt_num(c.ptilde.get(k)),
            opt_bit(c.valid.get(k))
        )
        .unwrap();
    }
    s
}

/// `k,beta_star,gamma_star` for `k = 0..L`.
pub fn policies_csv(r: &ScalarResults) -> String {
    let mut s = String::from("k,beta_star,gamma_star\n");
    for (k, (b, g)) in r.beta_star.iter().zip(&r.gamma_star).enumerate() {
        writeln!(s, "{k},{},{}", num(*b), num(*g)).unwrap();
    }
    s
}

/// `k,min_eig_P0,min_eig_P1,min_eig_Pcheck,valid` for `k = 0..=L`.
pub fn nd_csv(r: &NdResults) -> String {
    let mut s = String::from("k,min_eig_P0,min_eig_P1,min_eig_Pcheck,valid\n");
    for k in 0..r.min_eig_p0.len() {
        writeln!(
            s,
            "{k},{},{},{},{}",
            num(r.min_eig_p0[k]),
            num(r.min_eig_p1[k]),
            opt_num(r.min_eig_pcheck.get(k)),
            opt_bit(r.matrices.valid.get(k))
        )
        .unwrap();
    }
    s
}

/// `k,state,v0,v1,beta0,gamma0,beta1,gamma1`: values and takeover
/// probabilities (`beta` defender, `gamma` adversary) in each FlipDyn state.
pub fn values_csv(t: &ValueTables) -> String {
    let mut s = String::from("k,state,v0,v1,beta0,gamma0,beta1,gamma1\n");
    for k in 0..=t.horizon {
        for i in 0..t.v0[k].len() {
            write!(s, "{k},{i},{},{}", num(t.v0[k][i]), num(t.v1[k][i])).unwrap();
            for alpha in FlipState::BOTH {
                match t.policies.get(k) {
                    Some(p) => {
                        let p = &p[i][alpha.index()];
                        write!(s, ",{},{}", num(p.defender.p_act), num(p.adversary.p_act)).unwrap();
                    }
                    None => s.push_str(",,"),
                }
            }
            s.push('\n');
        }
    }
    s
}

/// `k,mean_alpha,mean_beta,mean_gamma` for `k = 0..=L`.
pub fn simulation_csv(st: &AggregateStats) -> String {
    let mut s = String::from("k,mean_alpha,mean_beta,mean_gamma\n");
    for (k, a) in st.mean_alpha.iter().enumerate() {
        writeln!(
            s,
            "{k},{},{},{}",
            num(*a),
            opt_num(st.mean_beta.get(k)),
            opt_num(st.mean_gamma.get(k))
        )
        .unwrap();
    }
    s
}

/// `run,k,alpha,a0,a1,stage_cost,x_0..x_{n-1}`.
pub fn trajectory_csv(records: &[TrajectoryRecord]) -> String {
    let dim = records
        .first()
        .and_then(|r| r.rows.first())
        .map_or(0, |r| r.x.len());
    let mut s = String::from("run,k,alpha,a0,a1,stage_cost");
    for i in 0..dim {
        write!(s, ",x_{i}").unwrap();
    }
    s.push('\n');
    for r in records {
        for row in &r.rows {
            write!(
                s,
                "{},{},{},{},{},{}",
                r.run,
                row.k,
                row.alpha.index(),
                bit(row.a0),
                bit(row.a1),
                num(row.stage_cost)
            )
            .unwrap();
            for x in &row.x {
                write!(s, ",{}", num(*x)).unwrap();
            }
            s.push('\n');
        }
    }
    s
}

/// Write via a temporary file in the same directory, then rename.
pub fn write_atomic(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    let io = |source| CliError::Io {
        path: path.clone(),
        source,
    };
    let mut tmp = NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(&path).map_err(|e| io(e.error))?;
    Ok(path)
}

impl ResultsBundle {
    /// The CSV files this bundle produces, by name.
    pub fn tables(&self, include_solver: bool) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if include_solver {
            if let Some(s) = &self.scalar {
                out.push((COEFFICIENTS_FILE, coefficients_csv(&s.coefficients)));
                out.push((POLICIES_FILE, policies_csv(s)));
            }
            if let Some(n) = &self.nd {
                out.push((ND_FILE, nd_csv(n)));
            }
            if let Some(t) = &self.finite {
                out.push((VALUES_FILE, values_csv(t)));
            }
        }
        if let Some(sim) = &self.simulation {
            out.push((SIMULATION_FILE, simulation_csv(&sim.stats)));
            if !sim.trajectories.is_empty() {
                out.push((TRAJECTORY_FILE, trajectory_csv(&sim.trajectories)));
            }
        }
        out
    }

    /// Write the tables and `results.json` into `dir`, creating it if needed.
    pub fn write(&mut self, dir: &Path, include_solver: bool) -> Result<Vec<PathBuf>, CliError> {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_owned(),
            source,
        })?;
        let tables = self.tables(include_solver);
        self.metadata.files = tables.iter().map(|(n, _)| n.to_string()).collect();
        self.metadata.files.push(RESULTS_FILE.to_owned());
        let mut written = Vec::with_capacity(tables.len() + 1);
        for (name, body) in &tables {
            written.push(write_atomic(dir, name, body.as_bytes())?);
        }
        let json = serde_json::to_vec_pretty(self).map_err(|e| CliError::Other(e.to_string()))?;
        written.push(write_atomic(dir, RESULTS_FILE, &json)?);
        Ok(written)
    }
}
