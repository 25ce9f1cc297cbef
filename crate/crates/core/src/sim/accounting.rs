//! Inventory, cash, Delta hedge and Mark-to-Market value of one path.

use crate::hamiltonian::Side;
use crate::market::{BookSpec, HestonJumpParams};
use crate::pricing::{GreeksBundle, HestonPricer};
use crate::Result;

use super::underlying::UnderlyingPath;

/// Model prices and Greeks of every option along a path,
/// `greeks[n * N + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketTape {
    pub n_options: usize,
    pub greeks: Vec<GreeksBundle>,
}

impl MarketTape {
    pub fn at(&self, n: usize) -> &[GreeksBundle] {
        &self.greeks[n * self.n_options..(n + 1) * self.n_options]
    }
}

/// Variance floor used when pricing on a simulated state.
pub const PRICING_NU_FLOOR: f64 = 1e-8;

/// Price every option at every node of the path.
pub fn build_tape(path: &UnderlyingPath, book: &BookSpec, pricers: &[HestonPricer]) -> Result<MarketTape> {
    let n = book.len();
    let mut greeks = vec![GreeksBundle::default(); (path.steps() + 1) * n];
    // Options sharing (underlying, maturity) share one characteristic slice.
    let mut groups: Vec<(usize, f64, Vec<usize>)> = Vec::new();
    for (j, o) in book.options.iter().enumerate() {
        match groups.iter_mut().find(|g| g.0 == o.underlying && g.1 == o.maturity) {
            Some(g) => g.2.push(j),
            None => groups.push((o.underlying, o.maturity, vec![j])),
        }
    }
    for (step, &t) in path.times.iter().enumerate() {
        for (i, maturity, members) in &groups {
            let s = path.spot(step)[*i];
            let nu = path.var(step)[*i].max(PRICING_NU_FLOOR);
            let slice = pricers[*i].slice(maturity - t, nu)?;
            for &j in members {
                greeks[step * n + j] = slice.greeks(s, book.options[j].strike);
            }
        }
    }
    Ok(MarketTape { n_options: n, greeks })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathState {
    pub t: f64,
    /// Inventory in contracts.
    pub q: Vec<f64>,
    pub cash: f64,
    /// Shares held per underlying.
    pub hedge: Vec<f64>,
    pub mtm: f64,
}

impl PathState {
    pub fn new(n_options: usize, d: usize) -> Self {
        Self {
            t: 0.0,
            q: vec![0.0; n_options],
            cash: 0.0,
            hedge: vec![0.0; d],
            mtm: 0.0,
        }
    }

    /// Trade `size` contracts of option `j` at `mid ∓ delta` (bid buys,
    /// ask sells).
    pub fn apply_fill(&mut self, j: usize, side: Side, size: f64, delta: f64, mid: f64) {
        match side {
            Side::Bid => {
                self.q[j] += size;
                self.cash -= size * (mid - delta);
            }
            Side::Ask => {
                self.q[j] -= size;
                self.cash += size * (mid + delta);
            }
        }
    }

    /// Book Delta per underlying.
    pub fn book_delta(&self, book: &BookSpec, greeks: &[GreeksBundle]) -> Vec<f64> {
        let mut out = vec![0.0; self.hedge.len()];
        for (j, o) in book.options.iter().enumerate() {
            out[o.underlying] += self.q[j] * greeks[j].delta;
        }
        out
    }

    /// `cash + Σ hedge·S + Σ q·O`.
    pub fn mark(&mut self, spot: &[f64], greeks: &[GreeksBundle]) -> f64 {
        let hedge: f64 = self.hedge.iter().zip(spot).map(|(h, s)| h * s).sum();
        let book: f64 = self.q.iter().zip(greeks).map(|(q, g)| q * g.price).sum();
        self.mtm = self.cash + hedge + book;
        self.mtm
    }

    /// Rebalance the hedge to `−Δ` at the current spot (self-financing)
    /// and re-mark.
    pub fn accounting_step(&mut self, book: &BookSpec, spot: &[f64], greeks: &[GreeksBundle]) -> f64 {
        let target = self.book_delta(book, greeks);
        for (i, d) in target.iter().enumerate() {
            let new = -d;
            self.cash -= (new - self.hedge[i]) * spot[i];
            self.hedge[i] = new;
        }
        self.mark(spot, greeks)
    }
}

/// Inventory penalty rate `(γ/2) Γᵀ Σ^ν Γ` with `Γ_i = Σ_j ℛ_{ji} q_j`
/// and `ℛ_{ji} = ξ_i 𝒱_j / 2` for options on underlying `i`.
pub fn penalty_rate(
    gamma: f64,
    params: &[HestonJumpParams],
    sigma_nu: &[Vec<f64>],
    book: &BookSpec,
    q: &[f64],
    greeks: &[GreeksBundle],
) -> f64 {
    let d = params.len();
    let mut g = vec![0.0; d];
    for (j, o) in book.options.iter().enumerate() {
        g[o.underlying] += 0.5 * params[o.underlying].xi * greeks[j].vega * q[j];
    }
    let mut acc = 0.0;
    for i in 0..d {
        for k in 0..d {
            acc += g[i] * sigma_nu[i][k] * g[k];
        }
    }
    0.5 * gamma * acc
}
