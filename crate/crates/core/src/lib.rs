//! Options market-making engine.
//!
//! The crate solves a Delta-hedged options dealer's quoting problem under
//! Heston dynamics. The value function is approximated by a quadratic form
//! in the inventory vector, `u = θ⁰ + qᵀθ¹ − qᵀθ²q`, whose coefficients
//! satisfy a coupled PDE system on the `(t, S, ν)` grid. A constant-Vega
//! reference strategy and a Monte Carlo RFQ simulator are provided for
//! comparison.
//!
//! Module map:
//! - [`market`]: model coefficients, correlation structure, option book.
//! - [`pricing`]: semi-analytic Heston call prices, Greeks, implied vols.
//! - [`hamiltonian`]: logistic RFQ intensities and optimal quotes.
//! - [`theta`]: the quadratic-inventory PDE system solver.
//! - [`baseline`]: the constant-Vega HJB solved on `(t, ν, 𝒱^π)`.
//! - [`sim`]: simulation of a trading day for both strategies.

pub mod baseline;
pub mod book;
pub mod error;
pub mod hamiltonian;
pub mod linalg;
pub mod market;
pub mod pricing;
pub mod quadrature;
pub mod sim;
pub mod theta;

pub use error::{Error, Result};
pub use hamiltonian::{HamiltonianEval, IntensityParams, Side};
pub use market::{
    BookSpec, CorrelationStructure, HestonJumpParams, JumpMark, JumpSpec, Measure, OptionSpec,
    QuotePair, ValidationReport,
};
pub use pricing::{GreeksBundle, HestonPricer};
