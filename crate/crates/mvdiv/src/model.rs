//! Problem parameters, characteristic roots, and regime classification.
//!
//! The surplus follows `dX = a dt + b dB − dD` and dividends are valued under a
//! mean-variance criterion with risk aversion `gamma` and discount rate `rho`.
//! The homogeneous ODEs for the first and second dividend moments have
//! characteristic equations
//!
//! ```text
//! ½ b² r² + a r − ρ  = 0   (roots r1 > 0 > r2)
//! ½ b² r² + a r − 2ρ = 0   (roots r3 > 0 > r4)
//! ```
//!
//! For `gamma ≥ 2a/b²` the equilibrium strategy pays the whole surplus out
//! immediately; below that threshold a barrier strategy is the candidate.

use serde::Serialize;
use thiserror::Error;

/// Validation failures for [`ModelParams`].
#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("parameter `{name}` must be positive, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("parameter `{name}` must be finite and nonnegative, got {value}")]
    Negative { name: &'static str, value: f64 },
}

/// The four scalars defining a problem instance.
///
/// All operations assume a validated instance; construct via [`ModelParams::new`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    /// Surplus drift per unit time (> 0).
    pub a: f64,
    /// Surplus volatility per square-root time (> 0).
    pub b: f64,
    /// Discount rate (> 0).
    pub rho: f64,
    /// Risk aversion in the mean-variance objective (≥ 0; 0 recovers the
    /// classical expected-dividend problem).
    pub gamma: f64,
}

impl ModelParams {
    pub fn new(a: f64, b: f64, rho: f64, gamma: f64) -> Result<Self, ModelError> {
        for (name, value) in [("a", a), ("b", b), ("rho", rho)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ModelError::NotPositive { name, value });
            }
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(ModelError::Negative { name: "gamma", value: gamma });
        }
        Ok(Self { a, b, rho, gamma })
    }

    /// The pay-all threshold `2a/b²`.
    pub fn pay_all_threshold(&self) -> f64 {
        2.0 * self.a / (self.b * self.b)
    }
}

/// Roots of the two characteristic quadratics, ordered `r2 < 0 < r1` and
/// `r4 < 0 < r3`, with `2 r1 > r3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CharacteristicRoots {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub r4: f64,
}

/// Computes the characteristic roots.
///
/// The positive roots are evaluated as `2ρ/(a + √(a²+2ρb²))` and
/// `4ρ/(a + √(a²+4ρb²))` instead of `(−a + √(a²+…))/b²`: the latter cancels
/// catastrophically when `a ≫ ρb²`.
pub fn characteristic_roots(params: &ModelParams) -> CharacteristicRoots {
    let ModelParams { a, b, rho, .. } = *params;
    let b2 = b * b;
    let s1 = (a * a + 2.0 * rho * b2).sqrt();
    let s2 = (a * a + 4.0 * rho * b2).sqrt();
    CharacteristicRoots {
        r1: 2.0 * rho / (a + s1),
        r2: (-a - s1) / b2,
        r3: 4.0 * rho / (a + s2),
        r4: (-a - s2) / b2,
    }
}

/// Risk-aversion regime of the equilibrium problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// `gamma ≥ 2a/b²`: paying out the entire surplus immediately is an
    /// equilibrium (zero variance beats any retention).
    PayAll,
    /// `gamma < 2a/b²`: a barrier strategy is the candidate equilibrium.
    BarrierCandidate,
}

/// Classifies the regime; the boundary `gamma = 2a/b²` counts as pay-all.
pub fn classify_regime(params: &ModelParams) -> Regime {
    if params.gamma >= params.pay_all_threshold() {
        Regime::PayAll
    } else {
        Regime::BarrierCandidate
    }
}
