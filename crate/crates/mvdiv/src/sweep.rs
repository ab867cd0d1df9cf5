//! Parameter studies: barrier level against each model parameter, value and
//! barrier-equation curves, and the concavity threshold γ̄.
//!
//! Every row of a sweep re-solves the barrier equation from scratch, so rows
//! are order-independent and can run in parallel; output ordering follows
//! the grid. Rows where the solver or the concavity check fails are flagged
//! with an explicit status instead of being dropped, since the region above
//! γ̄ is meaningful output rather than an error.

use crate::barrier::{self, solve_barrier, BarrierError, SolveOptions};
use crate::model::{characteristic_roots, classify_regime, ModelParams, Regime};
use crate::value::{build_solution, check_concavity, ClosedFormSolution, DEFAULT_N_GRID};
use rayon::prelude::*;
use serde::Serialize;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep spec: {0}")]
    InvalidSpec(String),
    #[error("no concave solution exists even at gamma = {tol}; parameters are pathological")]
    NotFound { tol: f64 },
}

/// Which model parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Varied {
    Gamma,
    Rho,
    A,
    B,
}

impl Varied {
    /// The base parameters with this field replaced by `v`.
    pub fn apply(&self, base: &ModelParams, v: f64) -> Result<ModelParams, crate::model::ModelError> {
        let ModelParams { a, b, rho, gamma } = *base;
        match self {
            Varied::Gamma => ModelParams::new(a, b, rho, v),
            Varied::Rho => ModelParams::new(a, b, v, gamma),
            Varied::A => ModelParams::new(v, b, rho, gamma),
            Varied::B => ModelParams::new(a, v, rho, gamma),
        }
    }
}

impl fmt::Display for Varied {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Varied::Gamma => "gamma",
            Varied::Rho => "rho",
            Varied::A => "a",
            Varied::B => "b",
        };
        f.write_str(s)
    }
}

impl FromStr for Varied {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gamma" => Ok(Varied::Gamma),
            "rho" => Ok(Varied::Rho),
            "a" => Ok(Varied::A),
            "b" => Ok(Varied::B),
            other => Err(format!("unknown sweep parameter '{other}' (one of: gamma, rho, a, b)")),
        }
    }
}

/// A validated sweep request: vary one parameter over a strictly ascending
/// grid, holding the others at `fixed`.
#[derive(Debug, Clone, Serialize)]
pub struct SweepSpec {
    pub varied: Varied,
    pub grid: Vec<f64>,
    pub fixed: ModelParams,
}

impl SweepSpec {
    pub fn new(varied: Varied, grid: Vec<f64>, fixed: ModelParams) -> Result<Self, SweepError> {
        if grid.is_empty() {
            return Err(SweepError::InvalidSpec("grid must be nonempty".into()));
        }
        if !grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(SweepError::InvalidSpec("grid must be strictly ascending".into()));
        }
        for &v in &grid {
            varied
                .apply(&fixed, v)
                .map_err(|e| SweepError::InvalidSpec(format!("grid value {v}: {e}")))?;
        }
        Ok(Self { varied, grid, fixed })
    }
}

/// Default grid for each parameter, 50 points, bracketing the ranges the
/// figures cover: γ ∈ [0.001, 0.1397], ρ ∈ [0.05, 0.5], a ∈ [0.5, 2],
/// b ∈ [0.1, 0.5].
pub fn default_grid(varied: Varied) -> Vec<f64> {
    let (lo, hi) = match varied {
        Varied::Gamma => (0.001, 0.1397),
        Varied::Rho => (0.05, 0.5),
        Varied::A => (0.5, 2.0),
        Varied::B => (0.1, 0.5),
    };
    let n = 50;
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Why a sweep row has no (or an unusable) barrier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RowStatus {
    Ok,
    PayAll,
    NoRoot,
    MultipleRoots,
}

impl fmt::Display for RowStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RowStatus::Ok => "ok",
            RowStatus::PayAll => "pay_all",
            RowStatus::NoRoot => "no_root",
            RowStatus::MultipleRoots => "multiple_roots",
        };
        f.write_str(s)
    }
}

/// One sweep row. Numeric fields are present only when the solve succeeded;
/// `concave` reports the strict-concavity check of that row's solution.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub varied_value: f64,
    pub status: RowStatus,
    pub x_tilde: Option<f64>,
    pub concave: Option<bool>,
    pub c1: Option<f64>,
    pub c3: Option<f64>,
}

/// Solves the barrier equation at every grid value.
pub fn sweep_barrier(spec: &SweepSpec) -> Vec<SweepRow> {
    spec.grid
        .par_iter()
        .map(|&v| {
            let params = spec
                .varied
                .apply(&spec.fixed, v)
                .expect("spec validated at construction");
            sweep_row(v, &params)
        })
        .collect()
}

fn sweep_row(varied_value: f64, params: &ModelParams) -> SweepRow {
    let empty = |status| SweepRow {
        varied_value,
        status,
        x_tilde: None,
        concave: None,
        c1: None,
        c3: None,
    };
    if classify_regime(params) == Regime::PayAll {
        return empty(RowStatus::PayAll);
    }
    match solve_barrier(params, &SolveOptions::default()) {
        Ok(root) => {
            let sol = build_solution(params, root.x_tilde)
                .expect("solver returns a positive barrier");
            let conc = check_concavity(&sol, DEFAULT_N_GRID);
            SweepRow {
                varied_value,
                status: RowStatus::Ok,
                x_tilde: Some(root.x_tilde),
                concave: Some(conc.concave),
                c1: Some(sol.c1),
                c3: Some(sol.c3),
            }
        }
        Err(BarrierError::NoRoot { .. }) => empty(RowStatus::NoRoot),
        Err(BarrierError::MultipleRoots { .. }) => empty(RowStatus::MultipleRoots),
        Err(BarrierError::InvalidOption(_)) => unreachable!("default options are valid"),
    }
}

/// Largest γ in `(0, 2a/b²)` for which the barrier equation has a unique
/// root whose value function is strictly concave, found by bisection to
/// width `tol`. The γ field of `params` is ignored.
pub fn gamma_bar(params: &ModelParams, tol: f64) -> Result<f64, SweepError> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(SweepError::InvalidSpec(format!("tol must be positive, got {tol}")));
    }
    let ceiling = params.pay_all_threshold();
    let concave_at = |gamma: f64| -> bool {
        let p = match ModelParams::new(params.a, params.b, params.rho, gamma) {
            Ok(p) => p,
            Err(_) => return false,
        };
        match solve_barrier(&p, &SolveOptions::default()) {
            Ok(root) => match build_solution(&p, root.x_tilde) {
                Ok(sol) => check_concavity(&sol, DEFAULT_N_GRID).concave,
                Err(_) => false,
            },
            Err(_) => false,
        }
    };

    let mut lo = tol.min(ceiling / 2.0);
    if !concave_at(lo) {
        return Err(SweepError::NotFound { tol });
    }
    let mut hi = ceiling * (1.0 - 1e-12);
    if concave_at(hi) {
        return Ok(hi);
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if concave_at(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// One node of a value-function curve.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ValuePoint {
    pub x: f64,
    pub v: f64,
    pub v_prime: f64,
    pub v_second: f64,
    pub g: f64,
    pub h: f64,
}

/// Evaluates the closed forms on a grid (grid must be nonnegative). At the
/// barrier itself the second derivative is the pay-side value, 0.
pub fn value_curve(sol: &ClosedFormSolution, x_grid: &[f64]) -> Vec<ValuePoint> {
    assert!(x_grid.iter().all(|&x| x >= 0.0), "value_curve grid must be nonnegative");
    x_grid
        .iter()
        .map(|&x| ValuePoint {
            x,
            v: sol.v(x),
            v_prime: sol.v_prime(x),
            v_second: sol.v_second(x),
            g: sol.g(x),
            h: sol.h(x),
        })
        .collect()
}

/// One node of a barrier-equation curve.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FPoint {
    pub x: f64,
    pub f: f64,
}

/// Evaluates the barrier equation `f(·, γ)` on a grid (nonnegative).
pub fn f_curve(params: &ModelParams, x_grid: &[f64]) -> Vec<FPoint> {
    assert!(x_grid.iter().all(|&x| x >= 0.0), "f_curve grid must be nonnegative");
    let roots = characteristic_roots(params);
    x_grid
        .iter()
        .map(|&x| FPoint { x, f: barrier::f(x, params, &roots) })
        .collect()
}
