//! Logistic RFQ intensities and the associated Hamiltonians.
//!
//! A request on one side of one option is filled at rate
//! `Λ(δ) = λ / (1 + exp(α + βδ/𝒱))`, where `𝒱` is the option's current
//! Vega. The Hamiltonian is `H(p) = sup_δ Λ(δ)(δ − p)`.
//!
//! With `s = β/𝒱`, `c = α + s p` and the logit `g = α + sδ`, the first-order
//! condition reads `g − c = 1 + e^{−g}`. It has a unique root, and
//!
//! ```text
//! δ* = (g − α)/s,   H = λe^{−g}/s,   H′ = −λ/(1 + e^g),
//! H″ = λ s e^{2g}/(1 + e^g)³.
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Bid,
    Ask,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Bid, Side::Ask];

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Bid => "bid",
            Side::Ask => "ask",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Logistic intensity on one side of one option.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntensityParams {
    /// Request rate per year.
    pub lambda_max: f64,
    pub alpha: f64,
    pub beta: f64,
    pub side: Side,
}

impl IntensityParams {
    pub fn new(lambda_max: f64, alpha: f64, beta: f64, side: Side) -> Self {
        Self {
            lambda_max,
            alpha,
            beta,
            side,
        }
    }

    /// Probability that a request quoted at `δ = 0` trades.
    pub fn fill_probability_at_mid(&self) -> f64 {
        logistic_neg(self.alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HamiltonianEval {
    pub value: f64,
    pub argmax: f64,
    pub first_deriv: f64,
    pub second_deriv: f64,
}

/// `1 / (1 + e^x)` without overflow.
fn logistic_neg(x: f64) -> f64 {
    if x > 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

fn check_vega(vega: f64) -> Result<()> {
    if vega > 0.0 && vega.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("vega must be positive and finite, got {vega}")))
    }
}

/// Fill intensity `λ/(1 + exp(α + βδ/𝒱))` per year.
pub fn rate(params: &IntensityParams, vega: f64, delta_quote: f64) -> Result<f64> {
    check_vega(vega)?;
    Ok(params.lambda_max * logistic_neg(params.alpha + params.beta * delta_quote / vega))
}

/// Fill probability of one request, `Λ(δ)/λ`.
pub fn fill_probability(params: &IntensityParams, vega: f64, delta_quote: f64) -> Result<f64> {
    check_vega(vega)?;
    Ok(logistic_neg(params.alpha + params.beta * delta_quote / vega))
}

const FOC_TOL: f64 = 1e-12;
const MAX_ITER: usize = 100;

/// Solve `g − c − 1 − e^{−g} = 0`.
///
/// The left side is increasing and concave in `g`, so Newton started left
/// of the root climbs monotonically. The bracket `[c + 1, c + 1 + e^{−c−1}]`
/// backs it up with bisection.
fn solve_logit(c: f64) -> Result<f64> {
    let f = |g: f64| g - c - 1.0 - (-g).exp();
    let mut lo = c + 1.0;
    let mut hi = c + 1.0 + (-(c + 1.0)).exp();
    let mut g = if c < -2.0 { (-(-c).ln()).max(lo) } else { lo };
    for _ in 0..MAX_ITER {
        let fg = f(g);
        let scale = 1.0 + (g - c).abs();
        if fg.abs() <= FOC_TOL * scale {
            return Ok(g);
        }
        if fg < 0.0 {
            lo = lo.max(g);
        } else {
            hi = hi.min(g);
        }
        let step = g - fg / (1.0 + (-g).exp());
        g = if step > lo && step < hi { step } else { 0.5 * (lo + hi) };
        if hi - lo <= f64::EPSILON * scale {
            return Ok(g);
        }
    }
    Err(Error::NoConvergence(format!(
        "optimal quote: c = {c}, bracket [{lo}, {hi}], residual {:e} after {MAX_ITER} iterations",
        f(g)
    )))
}

/// Maximize `Λ(δ)(δ − p)` over `δ`.
pub fn optimal_quote(params: &IntensityParams, vega: f64, p: f64) -> Result<HamiltonianEval> {
    check_vega(vega)?;
    if !p.is_finite() {
        return Err(Error::domain(format!("reservation increment p = {p} is not finite")));
    }
    let s = params.beta / vega;
    let lambda = params.lambda_max;
    let c = params.alpha + s * p;
    let g = solve_logit(c)?;
    let sig = logistic_neg(g);
    let one_m = logistic_neg(-g);
    Ok(HamiltonianEval {
        value: lambda * (-g).exp() / s,
        argmax: (g - params.alpha) / s,
        first_deriv: -lambda * sig,
        second_deriv: lambda * s * one_m * one_m * sig,
    })
}

/// `(H(0), H′(0), H″(0))`.
pub fn h_derivs_zero(params: &IntensityParams, vega: f64) -> Result<(f64, f64, f64)> {
    let e = optimal_quote(params, vega, 0.0)?;
    Ok((e.value, e.first_deriv, e.second_deriv))
}
