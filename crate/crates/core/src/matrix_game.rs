//! 2x2 zero-sum matrix games.
//!
//! The row player minimizes and the column player maximizes. Row and column
//! index 0 is "idle", index 1 is "takeover", so a solution's policies map
//! directly onto [`MixedPolicy2`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::MixedPolicy2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("degenerate 2x2 game: denominator {denominator:e} is numerically zero")]
    DegenerateGame { denominator: f64 },
    #[error("matrix has a pure saddle at ({row}, {col}) with value {value}")]
    PureSaddleExists { row: usize, col: usize, value: f64 },
    #[error("payoff entries must be finite")]
    NonFinite,
}

/// Payoff matrix `[[m1, m2], [m3, m4]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayoffMatrix2 {
    pub m: [[f64; 2]; 2],
}

impl PayoffMatrix2 {
    pub fn new(m1: f64, m2: f64, m3: f64, m4: f64) -> Self {
        Self {
            m: [[m1, m2], [m3, m4]],
        }
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.m[row][col]
    }

    /// `row' M col`.
    pub fn bilinear(&self, row: &[f64; 2], col: &[f64; 2]) -> f64 {
        let mut v = 0.0;
        for (i, r) in row.iter().enumerate() {
            for (j, c) in col.iter().enumerate() {
                v += r * self.m[i][j] * c;
            }
        }
        v
    }

    /// `m1 - m2 + m4 - m3`.
    pub fn denominator(&self) -> f64 {
        let [[m1, m2], [m3, m4]] = self.m;
        (m1 - m2) + (m4 - m3)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let [[m1, m2], [m3, m4]] = self.m;
        Self::new(f(m1), f(m2), f(m3), f(m4))
    }

    fn max_abs(&self) -> f64 {
        self.m
            .iter()
            .flatten()
            .fold(1.0f64, |acc, v| acc.max(v.abs()))
    }

    fn check_finite(&self) -> Result<(), GameError> {
        if self.m.iter().flatten().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(GameError::NonFinite)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolutionKind {
    Mixed,
    Pure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameSolution2 {
    pub row_policy: MixedPolicy2,
    pub col_policy: MixedPolicy2,
    pub value: f64,
    pub kind: SolutionKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PureSaddle {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// A cell that is the largest entry of its row and the smallest of its
/// column. Ties go to the smallest row, then the smallest column.
pub fn find_pure_saddle(m: &PayoffMatrix2) -> Option<PureSaddle> {
    for row in 0..2 {
        for col in 0..2 {
            let v = m.m[row][col];
            if v <= m.m[1 - row][col] && v >= m.m[row][1 - col] {
                return Some(PureSaddle { row, col, value: v });
            }
        }
    }
    None
}

/// Unique completely mixed equilibrium of a matrix without a pure saddle.
pub fn solve_mixed(m: &PayoffMatrix2) -> Result<GameSolution2, GameError> {
    m.check_finite()?;
    if let Some(s) = find_pure_saddle(m) {
        return Err(GameError::PureSaddleExists {
            row: s.row,
            col: s.col,
            value: s.value,
        });
    }
    let [[m1, m2], [m3, m4]] = m.m;
    // Without a pure saddle the two summands of each denominator share a sign,
    // which keeps every ratio below inside [0, 1].
    let row_den = (m4 - m3) + (m1 - m2);
    let col_den = (m4 - m2) + (m1 - m3);
    if row_den.abs() < 1e-12 * m.max_abs() {
        return Err(GameError::DegenerateGame {
            denominator: row_den,
        });
    }
    let row_policy =
        MixedPolicy2::from_act((m1 - m2) / row_den).map_err(|_| GameError::DegenerateGame {
            denominator: row_den,
        })?;
    let col_policy =
        MixedPolicy2::from_act((m1 - m3) / col_den).map_err(|_| GameError::DegenerateGame {
            denominator: col_den,
        })?;
    Ok(GameSolution2 {
        row_policy,
        col_policy,
        value: (m1 * m4 - m2 * m3) / row_den,
        kind: SolutionKind::Mixed,
    })
}

/// Pure saddle when one exists, otherwise the mixed equilibrium.
pub fn solve(m: &PayoffMatrix2) -> Result<GameSolution2, GameError> {
    m.check_finite()?;
    match find_pure_saddle(m) {
        Some(s) => Ok(GameSolution2 {
            row_policy: pure_from_index(s.row),
            col_policy: pure_from_index(s.col),
            value: s.value,
            kind: SolutionKind::Pure,
        }),
        None => solve_mixed(m),
    }
}

fn pure_from_index(i: usize) -> MixedPolicy2 {
    if i == 0 {
        MixedPolicy2::pure(crate::model::Action::Idle)
    } else {
        MixedPolicy2::pure(crate::model::Action::Takeover)
    }
}

/// Largest violation of the saddle inequalities over pure deviations.
/// Non-positive (up to rounding) for an equilibrium.
pub fn saddle_violation(m: &PayoffMatrix2, sol: &GameSolution2) -> f64 {
    let y = sol.row_policy.as_array();
    let z = sol.col_policy.as_array();
    let mut worst = f64::NEG_INFINITY;
    for pure in [[1.0, 0.0], [0.0, 1.0]] {
        // The minimizer cannot gain by switching rows...
        worst = worst.max(sol.value - m.bilinear(&pure, &z));
        // ...and the maximizer cannot gain by switching columns.
        worst = worst.max(m.bilinear(&y, &pure) - sol.value);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pure_saddle_examples() {
        let s = find_pure_saddle(&PayoffMatrix2::new(0.0, 0.0, 1.0, 1.0)).unwrap();
        assert_eq!((s.row, s.col, s.value), (0, 0, 0.0));
        assert!(find_pure_saddle(&PayoffMatrix2::new(1.0, -1.0, -1.0, 1.0)).is_none());
        assert!(find_pure_saddle(&PayoffMatrix2::new(3.0, 1.0, 2.0, 4.0)).is_none());
    }

    #[test]
    fn pure_saddle_exhaustive_cells() {
        // Independent check of [[3,1],[2,4]]: no cell is both its row's max and its column's min.
        let m = [[3.0, 1.0], [2.0, 4.0]];
        let mut found = false;
        for r in 0..2 {
            for c in 0..2 {
                let row_max = m[r].iter().cloned().fold(f64::MIN, f64::max);
                let col_min = m[0][c].min(m[1][c]);
                found |= m[r][c] == row_max && m[r][c] == col_min;
            }
        }
        assert!(!found);
    }

    #[test]
    fn mixed_examples() {
        let s = solve_mixed(&PayoffMatrix2::new(1.0, -1.0, -1.0, 1.0)).unwrap();
        assert_eq!(s.row_policy.as_array(), [0.5, 0.5]);
        assert_eq!(s.col_policy.as_array(), [0.5, 0.5]);
        assert_eq!(s.value, 0.0);

        let s = solve_mixed(&PayoffMatrix2::new(3.0, 1.0, 2.0, 4.0)).unwrap();
        assert_eq!(s.row_policy.as_array(), [0.5, 0.5]);
        assert_eq!(s.col_policy.as_array(), [0.75, 0.25]);
        assert!((s.value - 2.5).abs() < 1e-15);
        assert_eq!(s.kind, SolutionKind::Mixed);
    }

    #[test]
    fn mixed_value_matches_grid_search() {
        // Brute force over the row player's mixing probability at 1e-4
        // resolution; the maximizer's best reply is always pure.
        let m = PayoffMatrix2::new(3.0, 1.0, 2.0, 4.0);
        let mut best = f64::INFINITY;
        for i in 0..=10_000 {
            let p = i as f64 * 1e-4;
            let y = [1.0 - p, p];
            let reply = m.bilinear(&y, &[1.0, 0.0]).max(m.bilinear(&y, &[0.0, 1.0]));
            best = best.min(reply);
        }
        assert!((best - 2.5).abs() < 1e-3);
    }

    #[test]
    fn mixed_rejects_pure_saddle() {
        let err = solve_mixed(&PayoffMatrix2::new(2.0, 1.1, 2.5, 1.6)).unwrap_err();
        assert_eq!(
            err,
            GameError::PureSaddleExists {
                row: 0,
                col: 0,
                value: 2.0
            }
        );
    }

    #[test]
    fn solve_dispatch() {
        let s = solve(&PayoffMatrix2::new(1.0, -1.0, -1.0, 1.0)).unwrap();
        assert_eq!((s.kind, s.value), (SolutionKind::Mixed, 0.0));
        let s = solve(&PayoffMatrix2::new(0.0, 0.0, 1.0, 1.0)).unwrap();
        assert_eq!((s.kind, s.value), (SolutionKind::Pure, 0.0));
        assert_eq!(s.row_policy.p_act, 0.0);
        let s = solve(&PayoffMatrix2::new(3.0, 1.0, 2.0, 4.0)).unwrap();
        assert_eq!(s.kind, SolutionKind::Mixed);
        assert!((s.value - 2.5).abs() < 1e-15);
    }

    #[test]
    fn non_finite_rejected() {
        assert_eq!(
            solve(&PayoffMatrix2::new(f64::NAN, 0.0, 0.0, 0.0)).unwrap_err(),
            GameError::NonFinite
        );
    }

    fn matrix() -> impl Strategy<Value = PayoffMatrix2> {
        prop::array::uniform4(-10.0..10.0f64)
            .prop_map(|[a, b, c, d]| PayoffMatrix2::new(a, b, c, d))
    }

    proptest! {
        #[test]
        fn saddle_property_holds(m in matrix()) {
            let sol = solve(&m).unwrap();
            prop_assert!(saddle_violation(&m, &sol) <= 1e-9);
            let bil = m.bilinear(&sol.row_policy.as_array(), &sol.col_policy.as_array());
            prop_assert!((bil - sol.value).abs() <= 1e-9 * m.max_abs());
        }

        #[test]
        fn policies_in_simplex(m in matrix()) {
            let sol = solve(&m).unwrap();
            for p in [sol.row_policy, sol.col_policy] {
                prop_assert!((0.0..=1.0).contains(&p.p_act));
                prop_assert!((0.0..=1.0).contains(&p.p_idle));
                prop_assert_eq!(p.p_act + p.p_idle, 1.0);
            }
        }

        #[test]
        fn affine_invariance(m in matrix(), c in 0.1..10.0f64, b in -10.0..10.0f64) {
            let s = solve(&m).unwrap();
            let t = solve(&m.map(|v| c * v + b)).unwrap();
            prop_assert!((t.value - (c * s.value + b)).abs() < 1e-9 * (1.0 + c * m.max_abs() + b.abs()));
            prop_assert_eq!(s.kind, t.kind);
            if s.kind == SolutionKind::Mixed {
                prop_assert!((s.row_policy.p_act - t.row_policy.p_act).abs() < 1e-9);
                prop_assert!((s.col_policy.p_act - t.col_policy.p_act).abs() < 1e-9);
            }
        }
    }
}
