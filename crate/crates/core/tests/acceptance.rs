//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use flipdyn::experiments::{
    ls_slope, nd_trend_params, recovery_experiment, scalar_trend_params, ND_HORIZON, RECOVERY_STEP,
};
use flipdyn::finite::{
    backward_induction, evaluate_value_tree, StateEnumeration, DEFAULT_TREE_CAP,
};
use flipdyn::linalg::spectral_radius;
use flipdyn::lq_nd::{
    exact_one_step_values, nd_backward_recursion, proposition1_check, NdLQParams,
};
use flipdyn::lq_scalar::{
    scalar_backward_recursion, scalar_value_at, LqError, ScalarLQParams, ValidityMode,
};
use flipdyn::lqr::{lqr_gain, LqrWeights};
use flipdyn::matrix_game::{find_pure_saddle, saddle_violation, solve_mixed, PayoffMatrix2};
use flipdyn::model::{
    Action, ClosedLoopDynamics, CostModel, FlipState, GameSpec, MixedPolicy2, PhysicalState,
    TerminalCost,
};
use flipdyn::simulator::{
    expected_cost_exhaustive, monte_carlo, FnPolicy, PolicyProvider, RolloutConfig, ScalarPolicy,
    SimError, TabularPolicy,
};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn within(limit_s: f64, start: Instant) -> Result<f64, String> {
    let t = start.elapsed().as_secs_f64();
    if t < limit_s {
        Ok(t)
    } else {
        Err(format!("runtime {t:.2} s exceeds {limit_s} s"))
    }
}

// Criterion 1 ---------------------------------------------------------------

/// Upper value by scanning the row player's mix on a 1e-4 grid against pure
/// best replies, and lower value by scanning the column player's mix.
fn grid_values(m: &PayoffMatrix2) -> (f64, f64) {
    let mut upper = f64::INFINITY;
    let mut lower = f64::NEG_INFINITY;
    for i in 0..=10_000 {
        let p = i as f64 * 1e-4;
        let y = [1.0 - p, p];
        upper = upper.min(m.bilinear(&y, &[1.0, 0.0]).max(m.bilinear(&y, &[0.0, 1.0])));
        lower = lower.max(m.bilinear(&[1.0, 0.0], &y).min(m.bilinear(&[0.0, 1.0], &y)));
    }
    (upper, lower)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut n = 0;
    let (mut worst_grid, mut worst_closed, mut worst_saddle) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
    while n < 1000 {
        let e: [f64; 4] = std::array::from_fn(|_| rng.random_range(-5.0..5.0));
        let m = PayoffMatrix2::new(e[0], e[1], e[2], e[3]);
        if find_pure_saddle(&m).is_some() {
            continue;
        }
        n += 1;
        let s = solve_mixed(&m).map_err(|e| e.to_string())?;
        let (up, lo) = grid_values(&m);
        worst_grid = worst_grid
            .max((s.value - up).abs())
            .max((s.value - lo).abs());
        let closed = (e[0] * e[3] - e[1] * e[2]) / (e[0] - e[1] + e[3] - e[2]);
        worst_closed = worst_closed.max((s.value - closed).abs());
        worst_saddle = worst_saddle.max(saddle_violation(&m, &s));
    }
    let t = within(1.0, start)?;
    ensure!(worst_grid < 1e-3, "grid oracle gap {worst_grid:e} >= 1e-3");
    ensure!(
        worst_closed < 1e-12,
        "closed-form gap {worst_closed:e} >= 1e-12"
    );
    ensure!(
        worst_saddle <= 1e-9,
        "saddle violation {worst_saddle:e} > 1e-9"
    );
    Ok(format!(
        "1000 matrices; grid gap {worst_grid:.2e}, closed-form gap {worst_closed:.2e}, saddle violation {worst_saddle:.2e}; {t:.2} s"
    ))
}

// Criterion 2 ---------------------------------------------------------------

/// Overrides one player's policy at a single `(k, state, alpha)` cell.
fn cell_deviation<'a, P: PolicyProvider>(
    base: &'a P,
    cell: (usize, PhysicalState, FlipState),
    defender: bool,
    action: Action,
) -> impl PolicyProvider + 'a {
    FnPolicy(
        move |k: usize, x: &PhysicalState, alpha: FlipState| -> Result<_, SimError> {
            let (mut d, mut a) = base.policy(k, x, alpha)?;
            if k == cell.0 && *x == cell.1 && alpha == cell.2 {
                if defender {
                    d = MixedPolicy2::pure(action);
                } else {
                    a = MixedPolicy2::pure(action);
                }
            }
            Ok((d, a))
        },
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_eq, mut worst_dev) = (0.0f64, f64::NEG_INFINITY);
    let mut games = 0;
    for n in 1..=4usize {
        for l in 1..=4usize {
            for _ in 0..50 {
                let succ0: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let succ1: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let draw = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| -> Vec<f64> {
                    (0..n).map(|_| rng.random_range(lo..hi)).collect()
                };
                let g = draw(&mut rng, 0.1, 5.0);
                let d = draw(&mut rng, 0.1, 3.0);
                let a = draw(&mut rng, 0.1, 3.0);
                let mu = rng.random_range(0.0..2.0);
                let dyns = ClosedLoopDynamics::from_successor_tables(succ0, succ1);
                let costs = CostModel::from_tables(g, d, a);
                let terminal = TerminalCost::standard(&costs, mu);
                let x0 = PhysicalState::scalar(0.0).unwrap();
                let spec = GameSpec::new(dyns.clone(), costs, terminal, l, x0, FlipState::Defender)
                    .map_err(|e| e.to_string())?;
                let en = StateEnumeration::indexed(n, &dyns, l).map_err(|e| e.to_string())?;
                let tables = backward_induction(&spec, &en).map_err(|e| e.to_string())?;
                let pol = TabularPolicy {
                    tables: &tables,
                    enumeration: &en,
                };
                games += 1;
                for (id, x) in en.states().iter().enumerate() {
                    for alpha in FlipState::BOTH {
                        let s = spec.with_start(x.clone(), alpha).unwrap();
                        let j = expected_cost_exhaustive(&s, &pol).map_err(|e| e.to_string())?;
                        worst_eq = worst_eq.max((j - tables.value(0, id, alpha)).abs());
                        if id != 0 || alpha != FlipState::Defender {
                            continue;
                        }
                        for k in 0..l {
                            for cx in en.states() {
                                for calpha in FlipState::BOTH {
                                    for action in [Action::Idle, Action::Takeover] {
                                        let cell = (k, cx.clone(), calpha);
                                        let dd = cell_deviation(&pol, cell.clone(), true, action);
                                        let jd = expected_cost_exhaustive(&s, &dd)
                                            .map_err(|e| e.to_string())?;
                                        // The defender minimizes: deviating must not lower the cost.
                                        worst_dev = worst_dev.max(j - jd);
                                        let ad = cell_deviation(&pol, cell, false, action);
                                        let ja = expected_cost_exhaustive(&s, &ad)
                                            .map_err(|e| e.to_string())?;
                                        worst_dev = worst_dev.max(ja - j);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let t = within(10.0, start)?;
    ensure!(
        worst_eq <= 1e-9,
        "value vs exhaustive expectation gap {worst_eq:e} > 1e-9"
    );
    ensure!(
        worst_dev <= 1e-8,
        "a pure deviation improved by {worst_dev:e} > 1e-8"
    );
    Ok(format!(
        "{games} games; value gap {worst_eq:.2e}, best deviation gain {worst_dev:.2e}; {t:.2} s"
    ))
}

// Criterion 3 ---------------------------------------------------------------

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut compared = 0usize;
    let mut draws = 0;
    while draws < 20 {
        let l = rng.random_range(1..=10usize);
        let p = ScalarLQParams::from_closed_loop(
            rng.random_range(0.3..1.0),
            rng.random_range(0.9..1.3),
            rng.random_range(0.5..2.0),
            rng.random_range(0.0..1.0),
            rng.random_range(0.0..1.0),
            rng.random_range(0.1..2.0),
            l,
        )
        .map_err(|e| e.to_string())?;
        let c = match scalar_backward_recursion(&p, ValidityMode::Strict) {
            Ok(c) => c,
            Err(LqError::ValidityViolation { .. }) => continue,
            Err(e) => return Err(e.to_string()),
        };
        draws += 1;
        for x0 in [0.5, 1.0, 2.0] {
            let spec = p
                .game_spec(x0, FlipState::Defender)
                .map_err(|e| e.to_string())?;
            let tree = evaluate_value_tree(&spec, DEFAULT_TREE_CAP).map_err(|e| e.to_string())?;
            for (k, node) in tree.nodes() {
                let x = node.state.as_vector()[0];
                worst = worst
                    .max((scalar_value_at(&c, x, FlipState::Defender, k) - node.v0).abs())
                    .max((scalar_value_at(&c, x, FlipState::Adversary, k) - node.v1).abs());
                compared += 1;
            }
        }
    }
    let t = within(5.0, start)?;
    ensure!(worst <= 1e-8, "scalar vs tree gap {worst:e} > 1e-8");
    Ok(format!(
        "20 draws, {compared} tree nodes; max gap {worst:.2e}; {t:.2} s"
    ))
}

// Criterion 4 ---------------------------------------------------------------

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let bounded = scalar_backward_recursion(
        &scalar_trend_params(0.99, 50).unwrap(),
        ValidityMode::Permissive,
    )
    .map_err(|e| e.to_string())?;
    let plateau = |p: &[f64]| {
        (0..=10)
            .map(|k| (p[k] - p[k + 1]).abs())
            .fold(0.0, f64::max)
    };
    let (d0, d1) = (plateau(&bounded.p0), plateau(&bounded.p1));
    let growing = scalar_backward_recursion(
        &scalar_trend_params(1.1, 50).unwrap(),
        ValidityMode::Permissive,
    )
    .map_err(|e| e.to_string())?;
    let increasing = (0..50).all(|k| growing.p1[k] > growing.p1[k + 1]);
    let ratio = growing.p1[0] / growing.p1[50];
    let t = within(1.0, start)?;
    let detail = format!(
        "bounded: max |dp0| = {d0:.3e}, max |dp1| = {d1:.3e} over k <= 10; unbounded: p1 increasing = {increasing}, p1[0]/p1[L] = {ratio:.3e}; {t:.3} s"
    );
    ensure!(d0 < 1e-6 && d1 < 1e-6, "plateau not reached: {detail}");
    ensure!(
        increasing && ratio > 10.0,
        "divergence not observed: {detail}"
    );
    Ok(detail)
}

// Criterion 5 ---------------------------------------------------------------

fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let norm = v.norm();
        if norm > 1e-3 {
            return v / norm;
        }
    }
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst0, mut worst1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut steps_checked = 0usize;
    let mut systems = 0usize;
    for n in [2usize, 3] {
        let mut built = 0;
        while built < 20 {
            let raw = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let rho = spectral_radius(&raw);
            if rho < 1e-6 {
                continue;
            }
            let f = raw * (rng.random_range(0.5..0.99) / rho);
            let b = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
            let Ok(k) = lqr_gain(&f, &b, &LqrWeights::identity(n, 1)) else {
                continue;
            };
            let eye = DMatrix::identity(n, n);
            let d = rng.random_range(0.05..1.0);
            let a = rng.random_range(0.05..1.0);
            let params = NdLQParams::new(
                f,
                b,
                k,
                DMatrix::zeros(1, n),
                eye.clone(),
                &eye * d,
                &eye * a,
                1.0,
                20,
            )
            .map_err(|e| e.to_string())?;
            let Ok(m) = nd_backward_recursion(&params, ValidityMode::Permissive) else {
                continue;
            };
            built += 1;
            systems += 1;
            for k in (0..20).filter(|&k| m.valid[k]) {
                steps_checked += 1;
                for _ in 0..100 {
                    let x = random_unit(&mut rng, n);
                    let (v0, v1) =
                        exact_one_step_values(&x, &m.p0[k + 1], &m.p1[k + 1], &params, k)
                            .map_err(|e| e.to_string())?;
                    worst0 = worst0.max(m.value_at(&x, FlipState::Defender, k) - v0);
                    worst1 = worst1.max(v1 - m.value_at(&x, FlipState::Adversary, k));
                }
            }
        }
    }
    let t = within(30.0, start)?;
    ensure!(steps_checked > 0, "no valid steps to check");
    ensure!(worst0 <= 1e-10, "v0 fell below x'P0x by {worst0:e}");
    ensure!(worst1 <= 1e-10, "v1 exceeded x'P1x by {worst1:e}");
    Ok(format!(
        "{systems} systems, {steps_checked} valid steps x 100 states; max(x'P0x - v0) = {worst0:.2e}, max(v1 - x'P1x) = {worst1:.2e}; {t:.2} s"
    ))
}

// Criterion 6 ---------------------------------------------------------------

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..1000 {
        let n = rng.random_range(1..=6usize);
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let p = m.transpose() * &m + DMatrix::identity(n, n) * 0.1;
        let x = random_unit(&mut rng, n) * rng.random_range(0.1..10.0);
        let ok = proposition1_check(&p, &x).map_err(|e| format!("matrix {i}: {e}"))?;
        ensure!(ok, "inequality violated on sample {i}");
    }
    let t = within(5.0, start)?;
    Ok(format!("1000 PD matrices (n <= 6); {t:.2} s"))
}

// Criterion 7 ---------------------------------------------------------------

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let s = scalar_trend_params(0.99, 100).unwrap();
    let one = |v: f64| DMatrix::from_element(1, 1, v);
    let n = NdLQParams::new(
        one(0.99),
        one(1.0),
        one(0.99 - 0.9),
        one(0.0),
        one(s.g),
        one(s.d),
        one(s.a),
        s.mu,
        100,
    )
    .map_err(|e| e.to_string())?;
    let cs = scalar_backward_recursion(&s, ValidityMode::Permissive).map_err(|e| e.to_string())?;
    let cn = nd_backward_recursion(&n, ValidityMode::Permissive).map_err(|e| e.to_string())?;
    let worst = (0..=100)
        .map(|k| {
            (cs.p0[k] - cn.p0[k][(0, 0)])
                .abs()
                .max((cs.p1[k] - cn.p1[k][(0, 0)]).abs())
        })
        .fold(0.0, f64::max);
    let flags_agree = cs.valid == cn.valid;
    let t = within(1.0, start)?;
    ensure!(worst <= 1e-12, "max coefficient gap {worst:e} > 1e-12");
    ensure!(flags_agree, "validity flags differ");
    Ok(format!(
        "L = 100; max coefficient gap {worst:.2e}; {t:.3} s"
    ))
}

// Criterion 8 ---------------------------------------------------------------

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let bounded = nd_backward_recursion(
        &nd_trend_params(0.99, 0.5, 0.9, ND_HORIZON).map_err(|e| e.to_string())?,
        ValidityMode::Permissive,
    )
    .map_err(|e| e.to_string())?;
    let (e0, e1) = (bounded.min_eig_p0(), bounded.min_eig_p1());
    let window = ND_HORIZON - 60;
    let change = |e: &[f64]| {
        (0..window)
            .map(|k| (e[k] - e[k + 1]).abs())
            .fold(0.0, f64::max)
    };
    let (c0, c1) = (change(&e0), change(&e1));
    let growing = nd_backward_recursion(
        &nd_trend_params(1.01, 0.5, 0.9, ND_HORIZON).map_err(|e| e.to_string())?,
        ValidityMode::Permissive,
    )
    .map_err(|e| e.to_string())?;
    let g1 = growing.min_eig_p1();
    let increasing = (0..ND_HORIZON).all(|k| g1[k] > g1[k + 1]);
    let t = within(5.0, start)?;
    let detail = format!(
        "f=0.99: max successive change over k <= {window}: P0 {c0:.3e}, P1 {c1:.3e}; f=1.01: min_eig_P1 increasing = {increasing} ({:.3} -> {:.3e}); {t:.3} s",
        g1[ND_HORIZON], g1[0]
    );
    ensure!(c0 < 1e-4 && c1 < 1e-4, "plateau not reached: {detail}");
    ensure!(increasing, "growth not observed: {detail}");
    Ok(detail)
}

// Criterion 9 ---------------------------------------------------------------

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let base = recovery_experiment(0.99, 0.5, 0.9, 500, 2024).map_err(|e| e.to_string())?;
    let ma = &base.stats.mean_alpha;
    let slope = ls_slope(&ma[RECOVERY_STEP + 1..=ND_HORIZON]);
    let costly = recovery_experiment(0.99, 0.9, 0.9, 500, 2024).map_err(|e| e.to_string())?;
    let diff = costly.stats.mean_alpha[40] - ma[40];
    let t = within(60.0, start)?;
    let detail = format!(
        "mean_alpha[10] = {}, [11] = {:.3}, [100] = {:.3}, slope over 11..100 = {slope:.3e}; mean_alpha[40]: D=0.9I {:.3}, D=0.5I {:.3} (diff {diff:.3}); {t:.2} s",
        ma[RECOVERY_STEP], ma[RECOVERY_STEP + 1], ma[ND_HORIZON], costly.stats.mean_alpha[40], ma[40]
    );
    ensure!(
        ma[RECOVERY_STEP] == 1.0,
        "forced takeover not observed: {detail}"
    );
    ensure!(
        ma[ND_HORIZON] < ma[RECOVERY_STEP + 1],
        "no recovery: {detail}"
    );
    ensure!(slope < 0.0, "non-negative trend: {detail}");
    ensure!(
        diff.abs() > 0.02,
        "cost settings not distinguishable at k = 40: {detail}"
    );
    Ok(detail)
}

// Criterion 10 --------------------------------------------------------------

fn criterion_10() -> Outcome {
    let start = Instant::now();
    let p = ScalarLQParams::from_closed_loop(0.9, 1.1, 1.0, 0.5, 0.9, 1.0, 4).unwrap();
    let c = scalar_backward_recursion(&p, ValidityMode::Strict).map_err(|e| e.to_string())?;
    let spec = p
        .game_spec(1.0, FlipState::Defender)
        .map_err(|e| e.to_string())?;
    let pol = ScalarPolicy {
        coeffs: &c,
        params: &p,
    };
    let exact = expected_cost_exhaustive(&spec, &pol).map_err(|e| e.to_string())?;
    let cfg = RolloutConfig::new(7, 100_000);
    let a = monte_carlo(&spec, &pol, &cfg).map_err(|e| e.to_string())?;
    let b = monte_carlo(&spec, &pol, &cfg).map_err(|e| e.to_string())?;
    let z = (a.mean_cost - exact).abs() / a.cost_std_error;
    let t = within(30.0, start)?;
    ensure!(z < 3.0, "|mean - exact| = {z:.2} standard errors");
    ensure!(a == b, "reruns differ");
    Ok(format!(
        "exact {exact:.6}, MC {:.6} +- {:.2e} ({z:.2} SE), reruns bit-identical; {t:.2} s",
        a.mean_cost, a.cost_std_error
    ))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("matrix-game oracle equivalence", criterion_1),
        ("finite backward induction exactness", criterion_2),
        ("scalar LQ vs value tree", criterion_3),
        ("scalar coefficient trends", criterion_4),
        ("n-D one-step bound direction", criterion_5),
        ("Cauchy-Schwarz bound", criterion_6),
        ("scalar collapse of the n-D recursion", criterion_7),
        ("n-D coefficient trends", criterion_8),
        ("recovery of control", criterion_9),
        ("Monte Carlo consistency", criterion_10),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    let total = Instant::now();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let label = format!("criterion {:>2} ({name})", i + 1);
        if !filter.is_empty() && !filter.iter().any(|s| label.contains(s.as_str())) {
            continue;
        }
        let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match out {
            Ok(detail) => println!("PASS {label}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {label}: {detail}");
            }
        }
    }
    println!(
        "acceptance: {} failed ({:.1} s)",
        failed,
        total.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
