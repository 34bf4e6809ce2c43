//! Mechanisms for budgeted exchange markets.
//!
//! Agents hold a per-unit value, a money budget and an endowment of a single
//! divisible resource. A mechanism reads reported values and emits, for every
//! agent, a permitted net-trade interval and a personal unit price. Agents then
//! trade freely inside those constraints until no further trade is possible.
//!
//! The crate is organized bottom-up:
//!
//! - [`model`]: domain types, instance generation and JSON documents.
//! - [`welfare`]: market liquid welfare, the optimal distribution, the
//!   welfare-optimal uniform price and the half-approximate price.
//! - [`equilibrium`]: reachability, the balanced-market uniqueness test,
//!   worst-case welfare/utility over reachable states and a bilateral-trade
//!   simulator.
//! - [`mechanisms`]: the random-sampling uniform-price mechanisms and the
//!   differential-pricing mechanism with threshold payments.
//! - [`audit`]: seeded campaigns measuring truthfulness, approximation ratio,
//!   profitability and large-market parameters.

pub mod audit;
pub mod equilibrium;
pub mod error;
pub mod mechanisms;
pub mod model;
pub mod welfare;

pub use error::{Error, Result};

/// Absolute tolerance used by all market-logic comparisons.
pub const TOL: f64 = 1e-9;

/// `|a - b| <= TOL * max(1, |a|, |b|)`.
pub fn approx_eq(a: f64, b: f64) -> bool {
    approx_eq_tol(a, b, TOL)
}

pub fn approx_eq_tol(a: f64, b: f64, tol: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= tol * 1f64.max(a.abs()).max(b.abs())
}
