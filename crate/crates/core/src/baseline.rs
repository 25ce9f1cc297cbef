//! Constant-Vega reference strategy.
//!
//! The book is summarized by its portfolio Vega `𝒱^π = Σ_j 𝒱^j q^j` with
//! every `𝒱^j` frozen at the day-start state. The value `u(t, ν, 𝒱^π)`
//! solves
//!
//! ```text
//! ∂_t u + a_ℙ ∂_ν u + ½ ν ξ² ∂_νν u + 𝒱^π (a_ℙ − a_ℚ)/(2√ν) − (γξ²/8)(𝒱^π)²
//!     + Σ_j w_j [H^{j,b}(p_b) + H^{j,a}(p_a)] = 0,   u(T) = 0,
//! p_b = (u(𝒱^π) − u(𝒱^π + z^j𝒱^j))/z^j,   p_a = (u(𝒱^π) − u(𝒱^π − z^j𝒱^j))/z^j,
//! ```
//!
//! marched backward with an implicit `ν` operator and explicit Hamiltonian
//! sub-steps. Shifted values are linearly interpolated on the Vega axis.

use serde::{Deserialize, Serialize};

use crate::hamiltonian::{optimal_quote, Side};
use crate::linalg::solve_tridiagonal_multi;
use crate::market::{BookSpec, HestonJumpParams, Measure, QuotePair};
use crate::pricing::HestonPricer;
use crate::theta::{Axis, HamiltonianScaling, QuoteResult};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub nu_nodes: usize,
    pub nu_lo: f64,
    pub nu_hi: f64,
    pub vega_nodes: usize,
    /// The Vega axis spans `±inventory_range · max_j z^j𝒱^j`.
    pub inventory_range: f64,
    pub steps: usize,
    pub gamma: f64,
    pub hamiltonian_scaling: HamiltonianScaling,
    /// Upper bound on `dt · Σ_j w_j λ^j / z^j` per explicit sub-step.
    pub max_rate_dt: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            nu_nodes: 40,
            nu_lo: 0.005,
            nu_hi: 0.15,
            vega_nodes: 81,
            inventory_range: 40.0,
            steps: 200,
            gamma: 2e-5,
            hamiltonian_scaling: HamiltonianScaling::TradeSize,
            max_rate_dt: 0.5,
        }
    }
}

/// Grid on `(ν, 𝒱^π)` with the frozen per-option Vegas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VegaPortfolioGrid {
    pub nu: Axis,
    pub vega: Axis,
    pub horizon: f64,
    pub steps: usize,
    pub frozen_vegas: Vec<f64>,
}

impl VegaPortfolioGrid {
    /// Vegas frozen at `(0, S₀, ν₀)`, axis from the configured range.
    pub fn new(config: &BaselineConfig, params: &HestonJumpParams, book: &BookSpec, horizon: f64) -> Result<Self> {
        let pricer = HestonPricer::new(params);
        let frozen_vegas = book
            .options
            .iter()
            .map(|o| Ok(pricer.greeks(0.0, params.s0, params.nu0, o.strike, o.maturity)?.vega))
            .collect::<Result<Vec<_>>>()?;
        let span = book
            .trade_size
            .iter()
            .zip(&frozen_vegas)
            .map(|(z, v)| z * v)
            .fold(0.0f64, f64::max)
            * config.inventory_range;
        let grid = Self {
            nu: Axis::new(config.nu_lo, config.nu_hi, config.nu_nodes)?,
            vega: Axis::new(-span, span, config.vega_nodes)?,
            horizon,
            steps: config.steps,
            frozen_vegas,
        };
        grid.check(book)?;
        Ok(grid)
    }

    pub fn check(&self, book: &BookSpec) -> Result<()> {
        if self.frozen_vegas.len() != book.len() {
            return Err(Error::invalid("baseline: one frozen vega per option required"));
        }
        if let Some(v) = self.frozen_vegas.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::domain(format!("baseline: frozen vega {v} is not positive")));
        }
        if !(self.horizon > 0.0) || self.steps == 0 {
            return Err(Error::invalid("baseline: horizon and step count must be positive"));
        }
        if book.underlyings() > 1 {
            return Err(Error::invalid("baseline: a single underlying is supported"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn len(&self) -> usize {
        self.nu.n * self.vega.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Portfolio Vega of an inventory vector.
    pub fn portfolio_vega(&self, q: &[f64]) -> f64 {
        q.iter().zip(&self.frozen_vegas).map(|(a, b)| a * b).sum()
    }
}

/// Piecewise cubic Hermite table of `p ↦ H(p)` at a fixed Vega, with an
/// exact solve outside the tabulated range.
#[derive(Debug, Clone)]
struct HamiltonianTable {
    params: crate::IntensityParams,
    vega: f64,
    lo: f64,
    h: f64,
    value: Vec<f64>,
    slope: Vec<f64>,
}

impl HamiltonianTable {
    const NODES: usize = 4001;

    fn new(params: crate::IntensityParams, vega: f64) -> Result<Self> {
        let half = 50.0 * vega / params.beta;
        let h = 2.0 * half / (Self::NODES - 1) as f64;
        let mut value = Vec::with_capacity(Self::NODES);
        let mut slope = Vec::with_capacity(Self::NODES);
        for k in 0..Self::NODES {
            let e = optimal_quote(&params, vega, -half + k as f64 * h)?;
            value.push(e.value);
            slope.push(e.first_deriv);
        }
        Ok(Self {
            params,
            vega,
            lo: -half,
            h,
            value,
            slope,
        })
    }

    fn eval(&self, p: f64) -> Result<f64> {
        let pos = (p - self.lo) / self.h;
        if !(pos >= 0.0 && pos < (Self::NODES - 1) as f64) {
            return Ok(optimal_quote(&self.params, self.vega, p)?.value);
        }
        let k = pos as usize;
        let s = pos - k as f64;
        let (y0, y1) = (self.value[k], self.value[k + 1]);
        let (m0, m1) = (self.slope[k] * self.h, self.slope[k + 1] * self.h);
        let s2 = s * s;
        let s3 = s2 * s;
        Ok((2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * m0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * m1)
    }
}

/// Linear interpolation on a uniform axis, extrapolating outside it.
fn lerp_axis(ax: &Axis, line: &[f64], x: f64) -> f64 {
    let (k, w) = ax.locate_extrapolate(x);
    line[k] + w * (line[k + 1] - line[k])
}

/// Value slices of the constant-Vega HJB, one per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineFields {
    pub grid: VegaPortfolioGrid,
    pub trade_size: Vec<f64>,
    pub intensity: Vec<QuotePair>,
    /// `slices[n][i·n_vega + k]` is `u(t_n, ν_i, 𝒱_k)`.
    pub slices: Vec<Vec<f64>>,
}

impl BaselineFields {
    fn slice_weights(&self, t: f64) -> (usize, f64) {
        let dt = self.grid.dt();
        let pos = (t / dt).clamp(0.0, self.grid.steps as f64);
        let k = (pos.floor() as usize).min(self.grid.steps - 1);
        (k, pos - k as f64)
    }

    /// `u(t, ν, 𝒱^π)`; `ν` is clamped to its axis, `𝒱^π` extrapolated.
    pub fn value(&self, t: f64, nu: f64, vega: f64) -> f64 {
        let (k, wt) = self.slice_weights(t);
        let (i, wn, _) = self.grid.nu.locate(nu);
        let nv = self.grid.vega.n;
        let mut out = 0.0;
        for (sl, a) in [(k, 1.0 - wt), (k + 1, wt)] {
            if a == 0.0 {
                continue;
            }
            for (row, b) in [(i, 1.0 - wn), (i + 1, wn)] {
                if b == 0.0 {
                    continue;
                }
                let line = &self.slices[sl][row * nv..(row + 1) * nv];
                out += a * b * lerp_axis(&self.grid.vega, line, vega);
            }
        }
        out
    }

    /// Hamiltonian argument of option `j` on one side.
    pub fn increment(&self, t: f64, nu: f64, vega: f64, j: usize, side: Side) -> f64 {
        let z = self.trade_size[j];
        let shift = z * self.grid.frozen_vegas[j];
        let here = self.value(t, nu, vega);
        let there = match side {
            Side::Bid => self.value(t, nu, vega + shift),
            Side::Ask => self.value(t, nu, vega - shift),
        };
        (here - there) / z
    }

    /// Optimal spread of option `j`; `price` is filled from `mid`.
    pub fn quote(&self, t: f64, nu: f64, vega: f64, j: usize, side: Side, mid: f64) -> Result<QuoteResult> {
        if j >= self.trade_size.len() {
            return Err(Error::invalid(format!("option index {j} out of range")));
        }
        let p = self.increment(t, nu, vega, j, side);
        let e = optimal_quote(self.intensity[j].side(side), self.grid.frozen_vegas[j], p)?;
        let price = match side {
            Side::Ask => mid + e.argmax,
            Side::Bid => mid - e.argmax,
        };
        Ok(QuoteResult {
            delta: e.argmax,
            price,
            increment: p,
        })
    }

    /// CSV rows `t,S,nu,component,i,j,value` with the Vega coordinate in
    /// the `S` column and component `baseline`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W, steps: &[usize]) -> std::io::Result<()> {
        writeln!(w, "t,S,nu,component,i,j,value")?;
        let nv = self.grid.vega.n;
        for &n in steps {
            let t = n as f64 * self.grid.dt();
            for i in 0..self.grid.nu.n {
                for k in 0..nv {
                    let v = self.slices[n][i * nv + k];
                    writeln!(w, "{t},{},{},baseline,0,0,{v}", self.grid.vega.node(k), self.grid.nu.node(i))?;
                }
            }
        }
        Ok(())
    }
}

/// Backward march of the constant-Vega HJB.
pub fn solve_baseline(
    grid: &VegaPortfolioGrid,
    params: &HestonJumpParams,
    book: &BookSpec,
    config: &BaselineConfig,
) -> Result<BaselineFields> {
    grid.check(book)?;
    if !(config.gamma >= 0.0) || !(config.max_rate_dt > 0.0) {
        return Err(Error::invalid("baseline: gamma must be >= 0 and max_rate_dt > 0"));
    }
    let n = book.len();
    let (nn, nv) = (grid.nu.n, grid.vega.n);
    let weights: Vec<f64> = match config.hamiltonian_scaling {
        HamiltonianScaling::TradeSize => book.trade_size.clone(),
        HamiltonianScaling::AsPrinted => vec![1.0; n],
    };
    let tables = book
        .intensity
        .iter()
        .zip(&grid.frozen_vegas)
        .map(|(q, &v)| Ok([HamiltonianTable::new(q.bid, v)?, HamiltonianTable::new(q.ask, v)?]))
        .collect::<Result<Vec<_>>>()?;

    let rate: f64 = (0..n)
        .map(|j| weights[j] * (book.intensity[j].bid.lambda_max + book.intensity[j].ask.lambda_max) / book.trade_size[j])
        .sum();
    let dt = grid.dt();
    let subs = ((dt * rate / config.max_rate_dt).ceil() as usize).max(1);
    let h = dt / subs as f64;

    // Sources independent of u.
    let pen = 0.125 * config.gamma * params.xi * params.xi;
    let mut source = vec![0.0; nn * nv];
    for i in 0..nn {
        let nu = grid.nu.node(i);
        let cp = params.coefficients(Measure::Physical, 0.0, params.s0, nu);
        let cq = params.coefficients(Measure::RiskNeutral, 0.0, params.s0, nu);
        let drift = (cp.drift_nu - cq.drift_nu) / (2.0 * nu.sqrt());
        for k in 0..nv {
            let v = grid.vega.node(k);
            source[i * nv + k] = v * drift - pen * v * v;
        }
    }

    // Implicit ν operator (I − h A) with one-sided drift on the boundary.
    let hn = grid.nu.step();
    let (mut lower, mut diag, mut upper) = (vec![0.0; nn], vec![0.0; nn], vec![0.0; nn]);
    for i in 0..nn {
        let nu = grid.nu.node(i);
        let c = params.coefficients(Measure::Physical, 0.0, params.s0, nu);
        let (b, dif) = (c.drift_nu, 0.5 * c.vol_nu * c.vol_nu);
        let (l, d, u) = if i == 0 {
            (0.0, -b / hn, b / hn)
        } else if i == nn - 1 {
            (-b / hn, b / hn, 0.0)
        } else {
            (-0.5 * b / hn + dif / (hn * hn), -2.0 * dif / (hn * hn), 0.5 * b / hn + dif / (hn * hn))
        };
        lower[i] = -h * l;
        diag[i] = 1.0 - h * d;
        upper[i] = -h * u;
    }

    let shifts: Vec<f64> = (0..n).map(|j| book.trade_size[j] * grid.frozen_vegas[j]).collect();
    let mut u = vec![0.0; nn * nv];
    let mut next = vec![0.0; nn * nv];
    let mut scratch = Vec::new();
    let mut slices = vec![u.clone()];
    for _ in 0..grid.steps {
        for _ in 0..subs {
            for i in 0..nn {
                let line = &u[i * nv..(i + 1) * nv];
                for k in 0..nv {
                    let v = grid.vega.node(k);
                    let here = line[k];
                    let mut ham = 0.0;
                    for j in 0..n {
                        let z = book.trade_size[j];
                        let pb = (here - lerp_axis(&grid.vega, line, v + shifts[j])) / z;
                        let pa = (here - lerp_axis(&grid.vega, line, v - shifts[j])) / z;
                        ham += weights[j] * (tables[j][0].eval(pb)? + tables[j][1].eval(pa)?);
                    }
                    next[i * nv + k] = here + h * (source[i * nv + k] + ham);
                }
            }
            solve_tridiagonal_multi(&lower, &diag, &upper, &mut next, nv, &mut scratch);
            std::mem::swap(&mut u, &mut next);
        }
        if u.iter().any(|x| !x.is_finite()) {
            return Err(Error::NoConvergence("baseline: non-finite value in backward march".into()));
        }
        slices.push(u.clone());
    }
    slices.reverse();
    Ok(BaselineFields {
        grid: grid.clone(),
        trade_size: book.trade_size.clone(),
        intensity: book.intensity.clone(),
        slices,
    })
}
