//! The barrier equation and its root(s).
//!
//! The equilibrium barrier is the positive root of
//!
//! ```text
//! f(x, γ) = N1/D1 + γ·( 1 + (W/D1)·(N1/D1 − N3/D3) )
//!
//!   W  = e^{r1·x} − e^{r2·x}          D1 = r1·e^{r1·x} − r2·e^{r2·x}
//!   N1 = r1²·e^{r1·x} − r2²·e^{r2·x}  D3 = r3·e^{r3·x} − r4·e^{r4·x}
//!   N3 = r3²·e^{r3·x} − r4²·e^{r4·x}
//! ```
//!
//! with `f(0, γ) = γ − 2a/b² < 0` in the barrier regime and
//! `f(x, γ) → r1 + γ(2 − r3/r1) > 0` as `x → ∞`, so a root always exists there;
//! uniqueness is established numerically by a sign-change scan.
//!
//! For `γ = 0` the root has the classical closed form returned by
//! [`taksar_barrier`], which serves as an independent cross-check and sets the
//! scan scale.

use crate::model::{characteristic_roots, CharacteristicRoots, ModelParams};
use serde::Serialize;
use thiserror::Error;

/// Root-finding failures surfaced by [`solve_barrier`].
#[derive(Debug, Error, PartialEq)]
pub enum BarrierError {
    #[error("barrier equation has no sign change on [0, {x_max}]; x_max too small or parameters pathological")]
    NoRoot { x_max: f64 },
    #[error("barrier equation has {count} roots on the scan; outside the uniqueness regime (use find_all_roots)")]
    MultipleRoots { count: usize },
    #[error("invalid solver option: {0}")]
    InvalidOption(String),
}

/// A refined root of the barrier equation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BarrierSolution {
    /// The barrier level.
    pub x_tilde: f64,
    /// Final bracketing interval; `f` changes sign across it (degenerate,
    /// zero width, when the root fell exactly on a scan node).
    pub bracket: (f64, f64),
    /// `|f(x_tilde, γ)|` at acceptance.
    pub residual: f64,
    /// Number of sign changes seen on the initial scan.
    pub root_count_on_scan: usize,
}

/// Scan and refinement controls for the root search.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SolveOptions {
    /// Acceptance tolerance on bracket width and residual. Refinement always
    /// continues to the floating-point limit (adjacent-float bracket), so the
    /// achieved width/residual is typically far below this.
    pub tol: f64,
    /// Right end of the scan interval; `None` uses `20 · taksar_barrier`.
    pub x_max: Option<f64>,
    /// Number of scan subintervals.
    pub n_scan: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-10, x_max: None, n_scan: 2048 }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<(), BarrierError> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(BarrierError::InvalidOption(format!("tol must be positive, got {}", self.tol)));
        }
        if let Some(xm) = self.x_max {
            if !(xm > 0.0 && xm.is_finite()) {
                return Err(BarrierError::InvalidOption(format!("x_max must be positive, got {xm}")));
            }
        }
        if self.n_scan < 2 {
            return Err(BarrierError::InvalidOption(format!("n_scan must be ≥ 2, got {}", self.n_scan)));
        }
        Ok(())
    }
}

/// Evaluates the barrier equation `f(x, γ)`.
///
/// The exponential ratios are evaluated with `e^{r1·x}` (resp. `e^{r3·x}`)
/// factored out, so only decaying exponentials `e^{(r2−r1)x}`, `e^{(r4−r3)x}`
/// are ever formed; `f` stays finite for arbitrarily large `x` and converges
/// to `r1 + γ(2 − r3/r1)`. At `x = 0` the closed-form value `γ − 2a/b²` is
/// returned exactly.
pub fn f(x: f64, params: &ModelParams, roots: &CharacteristicRoots) -> f64 {
    let gamma = params.gamma;
    if x == 0.0 {
        return gamma - params.pay_all_threshold();
    }
    let CharacteristicRoots { r1, r2, r3, r4 } = *roots;
    let q12 = ((r2 - r1) * x).exp();
    let q34 = ((r4 - r3) * x).exp();
    let d1 = r1 - r2 * q12;
    let n1 = r1 * r1 - r2 * r2 * q12;
    let w = 1.0 - q12;
    let d3 = r3 - r4 * q34;
    let n3 = r3 * r3 - r4 * r4 * q34;
    let ratio1 = n1 / d1;
    let ratio3 = n3 / d3;
    ratio1 + gamma * (1.0 + w / d1 * (ratio1 - ratio3))
}

/// Closed-form barrier of the classical expected-dividend problem (`γ = 0`):
///
/// ```text
/// x̃ = b²/√(a²+2ρb²) · ln( (√(a²+2ρb²)+a) / (√(a²+2ρb²)−a) )
/// ```
///
/// Independent of `γ`; used as the scan scale and as a cross-oracle for
/// `solve_barrier` at small `γ`.
pub fn taksar_barrier(params: &ModelParams) -> f64 {
    let ModelParams { a, b, rho, .. } = *params;
    let s = (a * a + 2.0 * rho * b * b).sqrt();
    b * b / s * ((s + a) / (s - a)).ln()
}

/// Finds the unique positive root of the barrier equation.
///
/// Scans `[0, x_max]` on `n_scan` subintervals for sign changes, requires
/// exactly one, and refines it by bracketed bisection with secant
/// acceleration. Callers must be in the barrier regime (`γ < 2a/b²`), which
/// guarantees `f(0) < 0`.
pub fn solve_barrier(params: &ModelParams, opts: &SolveOptions) -> Result<BarrierSolution, BarrierError> {
    opts.validate()?;
    let roots = characteristic_roots(params);
    let x_max = opts.x_max.unwrap_or_else(|| 20.0 * taksar_barrier(params));
    let brackets = scan(params, &roots, x_max, opts.n_scan);
    match brackets.len() {
        0 => Err(BarrierError::NoRoot { x_max }),
        1 => Ok(refine(params, &roots, brackets[0], 1)),
        n => Err(BarrierError::MultipleRoots { count: n }),
    }
}

/// Finds every positive root on the scan grid, sorted ascending.
///
/// An empty result is a valid outcome (no sign change on `[0, x_max]`). A root
/// at `x = 0` exactly (e.g. `γ = 2a/b²`) is a boundary artifact and is not
/// reported; only interior roots are.
pub fn find_all_roots(params: &ModelParams, opts: &SolveOptions) -> Result<Vec<BarrierSolution>, BarrierError> {
    opts.validate()?;
    let roots = characteristic_roots(params);
    let x_max = opts.x_max.unwrap_or_else(|| 20.0 * taksar_barrier(params));
    let brackets = scan(params, &roots, x_max, opts.n_scan);
    let count = brackets.len();
    Ok(brackets.into_iter().map(|b| refine(params, &roots, b, count)).collect())
}

/// Sign-change scan. Returns bracketing intervals in ascending order; a zero
/// exactly on an interior node yields a degenerate (width-0) bracket.
fn scan(params: &ModelParams, roots: &CharacteristicRoots, x_max: f64, n_scan: usize) -> Vec<(f64, f64)> {
    let node = |i: usize| x_max * i as f64 / n_scan as f64;
    let mut brackets = Vec::new();
    let mut prev = f(0.0, params, roots);
    for i in 1..=n_scan {
        let x = node(i);
        let cur = f(x, params, roots);
        if cur == 0.0 {
            brackets.push((x, x));
        } else if prev * cur < 0.0 {
            brackets.push((node(i - 1), x));
        }
        prev = cur;
    }
    brackets
}

/// Refines a bracket to the floating-point limit: bisection steps guarantee
/// convergence, with a secant candidate tried on alternate iterations when it
/// falls strictly inside the bracket.
fn refine(
    params: &ModelParams,
    roots: &CharacteristicRoots,
    (mut lo, mut hi): (f64, f64),
    root_count_on_scan: usize,
) -> BarrierSolution {
    if lo == hi {
        return BarrierSolution {
            x_tilde: lo,
            bracket: (lo, hi),
            residual: f(lo, params, roots).abs(),
            root_count_on_scan,
        };
    }
    let mut flo = f(lo, params, roots);
    let mut fhi = f(hi, params, roots);
    debug_assert!(flo * fhi < 0.0);
    for iter in 0..200 {
        let mid = 0.5 * (lo + hi);
        let mut x = mid;
        if iter % 2 == 1 && fhi != flo {
            let secant = hi - fhi * (hi - lo) / (fhi - flo);
            if secant > lo && secant < hi {
                x = secant;
            }
        }
        if x <= lo || x >= hi {
            break; // bracket exhausted to adjacent floats
        }
        let fx = f(x, params, roots);
        if fx == 0.0 {
            lo = x;
            hi = x;
            flo = 0.0;
            break;
        }
        if flo * fx < 0.0 {
            hi = x;
            fhi = fx;
        } else {
            lo = x;
            flo = fx;
        }
    }
    let x_tilde = if flo.abs() <= fhi.abs() { lo } else { hi };
    BarrierSolution {
        x_tilde,
        bracket: (lo, hi),
        residual: f(x_tilde, params, roots).abs(),
        root_count_on_scan,
    }
}
