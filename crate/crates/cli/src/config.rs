//! TOML experiment configuration.
//!
//! A config has shared top-level keys (`horizon`, `mu`, `validity`), exactly
//! one model block (`[scalar]`, `[nd]` or `[finite]`), an optional
//! `[simulation]` block and an optional `[output]` block. Matrices are
//! row-major nested arrays. FlipDyn states are written as `0` (defender in
//! control) and `1` (adversary in control).

use std::fmt;
use std::path::{Path, PathBuf};

use flipdyn::lq_nd::NdLQParams;
use flipdyn::lq_scalar::{ScalarLQParams, ValidityMode};
use flipdyn::lqr::LqrWeights;
use flipdyn::model::FlipState;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub type Matrix = Vec<Vec<f64>>;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config {origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("invalid config {origin}:\n  - {}", .errors.join("\n  - "))]
    Invalid { origin: String, errors: Vec<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Scalar,
    Nd,
    Finite,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Scalar => "scalar",
            Mode::Nd => "nd",
            Mode::Finite => "finite",
        })
    }
}

fn default_mu() -> f64 {
    1.0
}

fn default_one() -> f64 {
    1.0
}

fn default_dt() -> f64 {
    0.1
}

fn is_false(b: &bool) -> bool {
    !*b
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub horizon: usize,
    /// Terminal margin added to the adversary-in-control terminal cost.
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default)]
    pub validity: ValidityMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scalar: Option<ScalarConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nd: Option<NdConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finite: Option<FiniteConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationConfig>,
    #[serde(default, skip_serializing_if = "OutputConfig::is_default")]
    pub output: OutputConfig,
}

/// Scalar LQ game `x+ = f x + b u + e w` with gains `u = -k x`, `w = w x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarConfig {
    pub f: f64,
    #[serde(default = "default_one")]
    pub b: f64,
    /// Attack channel; defaults to `b`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lqr: Option<ScalarLqrConfig>,
    #[serde(default)]
    pub w: f64,
    pub g: f64,
    pub d: f64,
    pub a: f64,
    #[serde(default = "default_one")]
    pub x0: f64,
    #[serde(default)]
    pub alpha0: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarLqrConfig {
    pub qc: f64,
    pub rc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NdConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<Matrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Matrix>,
    /// Alternative to `f`/`b`: the sampled double integrator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub double_integrator: Option<DoubleIntegratorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e: Option<Matrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Matrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lqr: Option<LqrConfig>,
    /// Adversary gain; defaults to zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Matrix>,
    pub q: Matrix,
    pub d: Matrix,
    pub a: Matrix,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub alpha0: u8,
}

/// `F = [[f_hat, dt], [0, f_hat]]`, `B = [dt^2/2, dt]'`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DoubleIntegratorConfig {
    pub f_hat: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqrConfig {
    pub qc: Matrix,
    pub rc: Matrix,
}

/// Finite game over states `0..n` given by successor and cost tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteConfig {
    pub succ0: Vec<usize>,
    pub succ1: Vec<usize>,
    pub g: Vec<f64>,
    pub d: Vec<f64>,
    pub a: Vec<f64>,
    #[serde(default)]
    pub x0: usize,
    #[serde(default)]
    pub alpha0: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub seed: u64,
    pub runs: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub forced_events: Vec<ForcedEvent>,
    /// Number of leading runs written to the trajectory file.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub trajectories: usize,
    #[serde(default, skip_serializing_if = "is_false")]
    pub record_policies: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcedEvent {
    pub k: usize,
    pub alpha: u8,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

impl OutputConfig {
    fn is_default(&self) -> bool {
        self.dir.is_none()
    }
}

/// SHA-256 of the config bytes, lowercase hex.
pub fn config_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    read_config(path).map(|(c, _)| c)
}

/// Load, parse and validate; also returns the hash of the file content.
pub fn read_config(path: &Path) -> Result<(ExperimentConfig, String), ConfigError> {
    let bytes = std::fs::read(path).map_err(|source| ConfigError::Read {
        path: path.to_owned(),
        source,
    })?;
    let origin = path.display().to_string();
    let text = String::from_utf8(bytes.clone()).map_err(|e| ConfigError::Parse {
        origin: origin.clone(),
        message: e.to_string(),
    })?;
    let config = parse_config(&text, &origin)?;
    Ok((config, config_hash(&bytes)))
}

pub fn parse_config(text: &str, origin: &str) -> Result<ExperimentConfig, ConfigError> {
    let config: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
        origin: origin.to_owned(),
        message: e.to_string(),
    })?;
    config.validate().map_err(|errors| ConfigError::Invalid {
        origin: origin.to_owned(),
        errors,
    })?;
    Ok(config)
}

impl ExperimentConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is representable as TOML")
    }

    /// The model block present; only meaningful on a validated config.
    pub fn mode(&self) -> Mode {
        if self.scalar.is_some() {
            Mode::Scalar
        } else if self.nd.is_some() {
            Mode::Nd
        } else {
            Mode::Finite
        }
    }

    /// Every problem found, in a stable order.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut errs = Vec::new();
        if self.horizon < 1 {
            errs.push("horizon must be ≥ 1".to_owned());
        }
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            errs.push(format!("mu must be finite and ≥ 0, got {}", self.mu));
        }
        let present: Vec<&str> = [
            (self.scalar.is_some(), "[scalar]"),
            (self.nd.is_some(), "[nd]"),
            (self.finite.is_some(), "[finite]"),
        ]
        .into_iter()
        .filter_map(|(p, n)| p.then_some(n))
        .collect();
        match present.len() {
            0 => {
                errs.push("exactly one of [scalar], [nd], [finite] is required, found none".into())
            }
            1 => {}
            _ => errs.push(format!(
                "exactly one of [scalar], [nd], [finite] is allowed, found {}",
                present.join(", ")
            )),
        }
        // Model-level checks need a usable horizon.
        let horizon = self.horizon.max(1);
        if let Some(s) = &self.scalar {
            validate_scalar(s, self.mu, horizon, &mut errs);
        }
        if let Some(n) = &self.nd {
            validate_nd(n, self.mu, horizon, &mut errs);
        }
        if let Some(f) = &self.finite {
            validate_finite(f, &mut errs);
        }
        if let Some(sim) = &self.simulation {
            validate_simulation(sim, self.horizon, &mut errs);
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }
}

pub fn flip_state(bit: u8) -> FlipState {
    if bit == 0 {
        FlipState::Defender
    } else {
        FlipState::Adversary
    }
}

fn check_alpha(field: &str, bit: u8, errs: &mut Vec<String>) {
    if bit > 1 {
        errs.push(format!("{field} must be 0 or 1, got {bit}"));
    }
}

/// Row-major nested array to a matrix; `None` when empty or ragged.
pub fn to_dmatrix(rows: &Matrix) -> Option<DMatrix<f64>> {
    let ncols = rows.first()?.len();
    if ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return None;
    }
    Some(DMatrix::from_row_iterator(
        rows.len(),
        ncols,
        rows.iter().flatten().copied(),
    ))
}

pub fn from_dmatrix(m: &DMatrix<f64>) -> Matrix {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl ScalarConfig {
    pub fn params(
        &self,
        k: f64,
        mu: f64,
        horizon: usize,
    ) -> Result<ScalarLQParams, flipdyn::LqError> {
        let p = ScalarLQParams::new(
            self.f, self.b, k, self.w, self.g, self.d, self.a, mu, horizon,
        )?;
        Ok(match self.e {
            Some(e) => p.with_e(e.into()),
            None => p,
        })
    }
}

fn validate_scalar(s: &ScalarConfig, mu: f64, horizon: usize, errs: &mut Vec<String>) {
    check_alpha("scalar.alpha0", s.alpha0, errs);
    if !s.x0.is_finite() {
        errs.push("scalar.x0 must be finite".into());
    }
    let k = match (s.k, s.lqr) {
        (Some(k), None) => Some(k),
        (None, Some(l)) => {
            if !(l.qc.is_finite() && l.qc >= 0.0 && l.rc.is_finite() && l.rc > 0.0) {
                errs.push("scalar.lqr needs qc ≥ 0 and rc > 0".into());
            }
            Some(0.0)
        }
        (Some(_), Some(_)) => {
            errs.push("scalar: give either k or lqr, not both".into());
            None
        }
        (None, None) => {
            errs.push("scalar: one of k or lqr is required".into());
            None
        }
    };
    if let Some(k) = k {
        if let Err(e) = s.params(k, mu, horizon).and_then(|p| p.validate()) {
            errs.push(format!("scalar: {e}"));
        }
    }
}

/// Plant `(F, B)` from either explicit matrices or the double integrator.
pub fn nd_plant(n: &NdConfig) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    match (&n.f, &n.b, &n.double_integrator) {
        (Some(f), Some(b), None) => Some((to_dmatrix(f)?, to_dmatrix(b)?)),
        (None, None, Some(di)) => Some(flipdyn::experiments::double_integrator(di.f_hat, di.dt)),
        _ => None,
    }
}

fn check_shape(
    field: &str,
    m: &Matrix,
    rows: usize,
    cols: Option<usize>,
    errs: &mut Vec<String>,
) -> Option<DMatrix<f64>> {
    let Some(d) = to_dmatrix(m) else {
        errs.push(format!("nd.{field} must be a non-empty rectangular matrix"));
        return None;
    };
    let cols_ok = cols.is_none_or(|c| d.ncols() == c);
    if d.nrows() != rows || !cols_ok {
        let want_cols = cols.map_or("any".to_owned(), |c| c.to_string());
        errs.push(format!(
            "nd.{field} must be {rows}x{want_cols}, got {}x{}",
            d.nrows(),
            d.ncols()
        ));
        return None;
    }
    if d.iter().any(|v| !v.is_finite()) {
        errs.push(format!("nd.{field} has non-finite entries"));
        return None;
    }
    Some(d)
}

fn validate_nd(n: &NdConfig, mu: f64, horizon: usize, errs: &mut Vec<String>) {
    check_alpha("nd.alpha0", n.alpha0, errs);
    let before = errs.len();
    let plant = match (&n.f, &n.b, &n.double_integrator) {
        (Some(f), Some(b), None) => {
            let f = check_shape("f", f, to_dmatrix(f).map_or(0, |m| m.nrows()), None, errs);
            match f {
                Some(f) if f.is_square() => {
                    check_shape("b", b, f.nrows(), None, errs).map(|b| (f, b))
                }
                Some(f) => {
                    errs.push(format!(
                        "nd.f must be square, got {}x{}",
                        f.nrows(),
                        f.ncols()
                    ));
                    None
                }
                None => None,
            }
        }
        (None, None, Some(di)) => {
            if !(di.f_hat.is_finite() && di.dt.is_finite() && di.dt > 0.0) {
                errs.push("nd.double_integrator needs finite f_hat and dt > 0".into());
                None
            } else {
                nd_plant(n)
            }
        }
        _ => {
            errs.push("nd: give either f and b, or double_integrator".into());
            None
        }
    };
    let Some((f, b)) = plant else { return };
    let dim = f.nrows();
    let m = b.ncols();
    let e = match &n.e {
        Some(e) => check_shape("e", e, dim, None, errs),
        None => Some(b.clone()),
    };
    let p = e.as_ref().map(|e| e.ncols());
    let w = match (&n.w, p) {
        (Some(w), Some(p)) => check_shape("w", w, p, Some(dim), errs),
        (None, Some(p)) => Some(DMatrix::zeros(p, dim)),
        _ => None,
    };
    let k = match (&n.k, &n.lqr) {
        (Some(k), None) => check_shape("k", k, m, Some(dim), errs),
        (None, Some(l)) => {
            let qc = check_shape("lqr.qc", &l.qc, dim, Some(dim), errs);
            let rc = check_shape("lqr.rc", &l.rc, m, Some(m), errs);
            if let (Some(qc), Some(rc)) = (qc, rc) {
                if let Err(e) = LqrWeights::new(qc, rc).validate() {
                    errs.push(format!("nd.lqr: {e}"));
                }
            }
            Some(DMatrix::zeros(m, dim))
        }
        (Some(_), Some(_)) => {
            errs.push("nd: give either k or lqr, not both".into());
            None
        }
        (None, None) => {
            errs.push("nd: one of k or lqr is required".into());
            None
        }
    };
    let q = check_shape("q", &n.q, dim, Some(dim), errs);
    let d = check_shape("d", &n.d, dim, Some(dim), errs);
    let a = check_shape("a", &n.a, dim, Some(dim), errs);
    if n.x0.len() != dim {
        errs.push(format!("nd.x0 must have length {dim}, got {}", n.x0.len()));
    } else if n.x0.iter().any(|v| !v.is_finite()) {
        errs.push("nd.x0 has non-finite entries".into());
    }
    if errs.len() > before {
        return;
    }
    let (Some(e), Some(w), Some(k), Some(q), Some(d), Some(a)) = (e, w, k, q, d, a) else {
        return;
    };
    let built = NdLQParams::new(f, b, k, w, q, d, a, mu, horizon)
        .and_then(|p| p.with_e(e.into()))
        .and_then(|p| p.validate());
    if let Err(e) = built {
        errs.push(format!("nd: {e}"));
    }
}

fn validate_finite(f: &FiniteConfig, errs: &mut Vec<String>) {
    check_alpha("finite.alpha0", f.alpha0, errs);
    let n = f.g.len();
    if n == 0 {
        errs.push("finite.g must list at least one state".into());
    }
    for (name, len) in [
        ("succ0", f.succ0.len()),
        ("succ1", f.succ1.len()),
        ("d", f.d.len()),
        ("a", f.a.len()),
    ] {
        if len != n {
            errs.push(format!("finite.{name} has {len} entries, expected {n}"));
        }
    }
    for (name, succ) in [("succ0", &f.succ0), ("succ1", &f.succ1)] {
        if let Some(s) = succ.iter().find(|&&s| s >= n) {
            errs.push(format!(
                "finite.{name} references state {s}, only {n} states"
            ));
        }
    }
    for (name, vals) in [("g", &f.g), ("d", &f.d), ("a", &f.a)] {
        if vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
            errs.push(format!("finite.{name} must be finite and non-negative"));
        }
    }
    if n > 0 && f.x0 >= n {
        errs.push(format!("finite.x0 = {} is not a state (0..{n})", f.x0));
    }
}

fn validate_simulation(s: &SimulationConfig, horizon: usize, errs: &mut Vec<String>) {
    if s.runs == 0 {
        errs.push("simulation.runs must be ≥ 1".into());
    }
    if s.trajectories > s.runs {
        errs.push(format!(
            "simulation.trajectories = {} exceeds runs = {}",
            s.trajectories, s.runs
        ));
    }
    for ev in &s.forced_events {
        check_alpha("simulation.forced_events.alpha", ev.alpha, errs);
        if horizon >= 1 && ev.k >= horizon {
            errs.push(format!(
                "simulation.forced_events: step {} is outside 0..{horizon}",
                ev.k
            ));
        }
    }
}
