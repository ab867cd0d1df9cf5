//! Equilibrium dividend barriers under a mean-variance criterion.
//!
//! A firm's surplus follows a drifted Brownian motion and pays dividends
//! until ruin; the payout is judged by `E[Y] − (γ/2)·Var[Y]`, where Y is the
//! discounted cumulative dividend and γ ≥ 0 the variance aversion. The
//! time-inconsistency of the variance term is resolved by a (weak)
//! equilibrium notion, and the equilibrium strategy is a barrier strategy:
//! pay nothing below a level x̃, reflect the surplus at x̃ above it.
//!
//! This crate solves the scalar equation that pins down x̃, evaluates the
//! closed-form moment and value functions, verifies the equilibrium system
//! on a grid, confirms the closed forms by Monte Carlo simulation of the
//! reflected surplus, and sweeps parameters for comparative statics. The
//! `mvdiv` binary exposes all of it on the command line.

pub mod barrier;
pub mod cli;
pub mod model;
pub mod simulate;
pub mod sweep;
pub mod value;
