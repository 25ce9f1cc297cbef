//! Monte Carlo simulation of an RFQ trading day.
//!
//! Paths of the underlyings are simulated by an Euler scheme; requests
//! arrive by thinning on the same clock; fills move inventory and cash;
//! the book is Delta-hedged every step and marked at model prices.

pub mod accounting;
pub mod experiment;
pub mod report;
pub mod rfq;
pub mod underlying;

use serde::{Deserialize, Serialize};

use crate::market::BookSpec;
use crate::{Error, Result};

pub use accounting::{build_tape, penalty_rate, MarketTape, PathState};
pub use experiment::{
    path_rng, run_experiment, run_path, BucketStat, Market, PathOutcome, SimReport, Strategy, TradeRecord,
    VegaSample,
};
pub use rfq::{accept, candidate, RfqDraw};
pub use underlying::{simulate_underlying, UnderlyingPath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Theta,
    Baseline,
    Constant,
}

impl StrategyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyKind::Theta => "theta",
            StrategyKind::Baseline => "baseline",
            StrategyKind::Constant => "constant",
        }
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub n_paths: usize,
    /// Euler steps over the horizon.
    pub steps: usize,
    pub seed: u64,
    /// Horizon in years.
    pub horizon: f64,
    pub strategies: Vec<StrategyKind>,
    pub buckets: usize,
    pub vega_sample_paths: usize,
    pub vega_sample_stride: usize,
    pub record_trades: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_paths: 100,
            steps: 2000,
            seed: 20_240_601,
            horizon: 0.004,
            strategies: vec![StrategyKind::Theta, StrategyKind::Baseline],
            buckets: 20,
            vega_sample_paths: 5,
            vega_sample_stride: 20,
            record_trades: true,
        }
    }
}

/// Largest admissible `λ dt` per side.
pub const MAX_CANDIDATE_PROB: f64 = 0.05;

impl SimConfig {
    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn check(&self, book: &BookSpec) -> Result<()> {
        if self.n_paths == 0 || self.steps == 0 || self.buckets == 0 {
            return Err(Error::invalid("sim: n_paths, steps and buckets must be positive"));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::invalid("sim: horizon must be positive"));
        }
        let max = book
            .intensity
            .iter()
            .flat_map(|q| [q.bid.lambda_max, q.ask.lambda_max])
            .fold(0.0f64, f64::max);
        if max * self.dt() > MAX_CANDIDATE_PROB {
            return Err(Error::invalid(format!(
                "sim: λ·dt = {:.4} exceeds {MAX_CANDIDATE_PROB}; increase steps",
                max * self.dt()
            )));
        }
        if book.options.iter().any(|o| o.maturity <= self.horizon) {
            return Err(Error::invalid("sim: every option must outlive the horizon"));
        }
        Ok(())
    }
}
