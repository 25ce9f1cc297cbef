//! Request arrivals and fills by thinning on a fixed clock.
//!
//! Each option draws one uniform per step that selects a bid request, an
//! ask request or nothing (probability `λ dt` for each side), and a second
//! uniform that accepts the request with probability `Λ(δ)/λ`. Both
//! uniforms are drawn every step so that strategies sharing a seed see the
//! same requests.

use rand::Rng;

use crate::hamiltonian::{fill_probability, IntensityParams, Side};
use crate::Result;

/// The two uniforms consumed by one option in one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfqDraw {
    pub arrival: f64,
    pub accept: f64,
}

impl RfqDraw {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            arrival: rng.random(),
            accept: rng.random(),
        }
    }
}

/// Side of the request arriving in this step, if any.
pub fn candidate(draw: &RfqDraw, lambda_bid: f64, lambda_ask: f64, dt: f64) -> Option<Side> {
    let pb = lambda_bid * dt;
    if draw.arrival < pb {
        Some(Side::Bid)
    } else if draw.arrival < pb + lambda_ask * dt {
        Some(Side::Ask)
    } else {
        None
    }
}

/// Accept a request quoted at spread `delta` with the current Vega.
pub fn accept(draw: &RfqDraw, params: &IntensityParams, vega: f64, delta: f64) -> Result<bool> {
    if delta == f64::INFINITY {
        return Ok(false);
    }
    Ok(draw.accept < fill_probability(params, vega, delta)?)
}
