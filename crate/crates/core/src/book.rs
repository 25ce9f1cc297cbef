//! Construction of an option book from strike/maturity ladders.

use serde::{Deserialize, Serialize};

use crate::market::{BookSpec, HestonJumpParams, OptionSpec, QuotePair};
use crate::pricing::HestonPricer;
use crate::{Error, Result};

/// Rules that turn a strike × maturity ladder into a [`BookSpec`].
///
/// Request rates follow `λ = days·requests / (1 + decay·|S₀ − K|)` per year
/// and trade sizes are `notional / O₀`, with `O₀` the model price at
/// `(0, S₀, ν₀)`. Options are ordered maturity-major, so index 0 is the
/// shortest maturity at the lowest strike.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BookRules {
    pub strikes: Vec<f64>,
    pub maturities: Vec<f64>,
    pub underlying: usize,
    pub requests_per_day: f64,
    pub days_per_year: f64,
    pub moneyness_decay: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Currency notional per transaction.
    pub notional: f64,
}

impl Default for BookRules {
    fn default() -> Self {
        Self {
            strikes: vec![97.0, 98.0, 99.0, 100.0],
            maturities: vec![0.3, 0.4, 0.5, 0.6, 0.7],
            underlying: 0,
            requests_per_day: 50.0,
            days_per_year: 252.0,
            moneyness_decay: 0.7,
            alpha: -0.7,
            beta: 10.0,
            notional: 5e5,
        }
    }
}

impl BookRules {
    /// Request rate per year for a strike.
    pub fn lambda(&self, s0: f64, strike: f64) -> f64 {
        self.days_per_year * self.requests_per_day / (1.0 + self.moneyness_decay * (s0 - strike).abs())
    }

    pub fn options(&self) -> Vec<OptionSpec> {
        let mut out = Vec::with_capacity(self.strikes.len() * self.maturities.len());
        for &maturity in &self.maturities {
            for &strike in &self.strikes {
                out.push(OptionSpec::call(self.underlying, strike, maturity));
            }
        }
        out
    }

    pub fn build(&self, params: &HestonJumpParams) -> Result<BookSpec> {
        if self.strikes.is_empty() || self.maturities.is_empty() {
            return Err(Error::invalid("book needs at least one strike and one maturity"));
        }
        let pricer = HestonPricer::new(params);
        let options = self.options();
        let mut trade_size = Vec::with_capacity(options.len());
        let mut intensity = Vec::with_capacity(options.len());
        for o in &options {
            let price = pricer.call_price(0.0, params.s0, params.nu0, o.strike, o.maturity)?;
            if !(price > 0.0) {
                return Err(Error::domain(format!(
                    "option (K={}, T={}) has non-positive price {price}",
                    o.strike, o.maturity
                )));
            }
            trade_size.push(self.notional / price);
            intensity.push(QuotePair::symmetric(self.lambda(params.s0, o.strike), self.alpha, self.beta));
        }
        Ok(BookSpec {
            options,
            trade_size,
            intensity,
        })
    }
}
