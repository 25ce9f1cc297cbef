//! Per-node source terms of the θ system: the `𝒢` vector, the `ℛ` matrix
//! and the Hamiltonian derivatives at zero, sampled at time knots.

use rayon::prelude::*;

use super::grid::SpatialGrid;
use crate::hamiltonian::h_derivs_zero;
use crate::market::{BookSpec, CorrelationStructure, HestonJumpParams, Measure};
use crate::pricing::{GreeksBundle, HestonPricer};
use crate::{Error, Result};

/// Sources at one time. Per-option arrays are indexed `node * N + j`;
/// `r` is indexed `(node * N + j) * d + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSlice {
    pub t: f64,
    pub vega: Vec<f64>,
    pub g: Vec<f64>,
    pub r: Vec<f64>,
    /// `(H(0), H′(0), H″(0))` on the bid side.
    pub h_bid: Vec<[f64; 3]>,
    pub h_ask: Vec<[f64; 3]>,
}

impl SourceSlice {
    fn zeros(nodes: usize, n: usize, d: usize) -> Self {
        Self {
            t: 0.0,
            vega: vec![0.0; nodes * n],
            g: vec![0.0; nodes * n],
            r: vec![0.0; nodes * n * d],
            h_bid: vec![[0.0; 3]; nodes * n],
            h_ask: vec![[0.0; 3]; nodes * n],
        }
    }

    fn lerp_into(a: &Self, b: &Self, w: f64, out: &mut Self) {
        let l = |x: f64, y: f64| x + w * (y - x);
        out.t = l(a.t, b.t);
        for (o, (x, y)) in out.vega.iter_mut().zip(a.vega.iter().zip(&b.vega)) {
            *o = l(*x, *y);
        }
        for (o, (x, y)) in out.g.iter_mut().zip(a.g.iter().zip(&b.g)) {
            *o = l(*x, *y);
        }
        for (o, (x, y)) in out.r.iter_mut().zip(a.r.iter().zip(&b.r)) {
            *o = l(*x, *y);
        }
        for (o, (x, y)) in out.h_bid.iter_mut().zip(a.h_bid.iter().zip(&b.h_bid)) {
            *o = [l(x[0], y[0]), l(x[1], y[1]), l(x[2], y[2])];
        }
        for (o, (x, y)) in out.h_ask.iter_mut().zip(a.h_ask.iter().zip(&b.h_ask)) {
            *o = [l(x[0], y[0]), l(x[1], y[1]), l(x[2], y[2])];
        }
    }
}

/// Source terms on a grid at increasing knot times, linear in between.
#[derive(Debug, Clone)]
pub struct SourceFields {
    pub n_options: usize,
    pub d: usize,
    pub nodes: usize,
    pub knots: Vec<SourceSlice>,
}

impl SourceFields {
    /// Linear interpolation in time; constant outside the knot range.
    pub fn interpolate_into(&self, t: f64, out: &mut SourceSlice) {
        let k = &self.knots;
        if k.len() == 1 || t <= k[0].t {
            out.clone_from(&k[0]);
            out.t = t;
            return;
        }
        let last = k.len() - 1;
        if t >= k[last].t {
            out.clone_from(&k[last]);
            out.t = t;
            return;
        }
        let i = k.partition_point(|s| s.t <= t) - 1;
        let w = (t - k[i].t) / (k[i + 1].t - k[i].t);
        SourceSlice::lerp_into(&k[i], &k[i + 1], w, out);
        out.t = t;
    }

    pub fn at(&self, t: f64) -> SourceSlice {
        let mut out = SourceSlice::zeros(self.nodes, self.n_options, self.d);
        self.interpolate_into(t, &mut out);
        out
    }
}

/// Greeks of every option on every `(S_i, ν_i)` pair of its underlying.
fn greek_tables(
    grid: &SpatialGrid,
    book: &BookSpec,
    pricers: &[HestonPricer],
    t: f64,
) -> Result<Vec<Vec<GreeksBundle>>> {
    book.options
        .iter()
        .map(|o| {
            let i = o.underlying;
            let (sa, na) = (grid.s_axes[i], grid.nu_axes[i]);
            let tau = o.maturity - t;
            let mut table = vec![GreeksBundle::default(); sa.n * na.n];
            for kn in 0..na.n {
                let slice = pricers[i].slice(tau, na.node(kn))?;
                for ks in 0..sa.n {
                    table[ks * na.n + kn] = slice.greeks(sa.node(ks), o.strike);
                }
            }
            Ok(table)
        })
        .collect()
}

fn build_slice(
    grid: &SpatialGrid,
    book: &BookSpec,
    params: &[HestonJumpParams],
    pricers: &[HestonPricer],
    t: f64,
    vega_floor: f64,
) -> Result<SourceSlice> {
    let d = grid.d();
    let n = book.len();
    let nodes = grid.len();
    let tables = greek_tables(grid, book, pricers, t)?;
    let mut out = SourceSlice::zeros(nodes, n, d);
    out.t = t;
    for node in 0..nodes {
        let idx = grid.unravel(node);
        let (s, nu) = grid.coords(node);
        for (j, o) in book.options.iter().enumerate() {
            let i = o.underlying;
            let gk = tables[j][idx[2 * i] * grid.nu_axes[i].n + idx[2 * i + 1]];
            let p = &params[i];
            let cp = p.coefficients(Measure::Physical, t, s[i], nu[i]);
            let cq = p.coefficients(Measure::RiskNeutral, t, s[i], nu[i]);
            let sq = nu[i].sqrt();
            let at = node * n + j;
            out.vega[at] = gk.vega;
            out.g[at] = gk.vega * (cp.drift_nu - cq.drift_nu) / (2.0 * sq)
                + p.rho * gk.vanna * (cp.vol_nu - cq.vol_nu) / (2.0 * sq) * cp.vol_s
                + gk.vomma * (cp.vol_nu * cp.vol_nu - cq.vol_nu * cq.vol_nu) / (4.0 * nu[i]);
            out.r[at * d + i] = cp.vol_nu / (2.0 * sq) * gk.vega;
            let v = gk.vega.max(vega_floor);
            let q = &book.intensity[j];
            let hb = h_derivs_zero(&q.bid, v)?;
            let ha = h_derivs_zero(&q.ask, v)?;
            out.h_bid[at] = [hb.0, hb.1, hb.2];
            out.h_ask[at] = [ha.0, ha.1, ha.2];
        }
    }
    Ok(out)
}

/// Evaluate the sources at every grid node for each knot time.
pub fn build_sources(
    grid: &SpatialGrid,
    book: &BookSpec,
    params: &[HestonJumpParams],
    corr: &CorrelationStructure,
    knot_times: &[f64],
    vega_floor: f64,
) -> Result<SourceFields> {
    let d = grid.d();
    if params.len() != d || corr.dim() != d {
        return Err(Error::invalid("sources: parameter and correlation dimensions differ from the grid"));
    }
    if book.options.iter().any(|o| o.underlying >= d) {
        return Err(Error::invalid("sources: option refers to a missing underlying"));
    }
    if knot_times.is_empty() || knot_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("sources: knot times must be non-empty and increasing"));
    }
    if !(vega_floor > 0.0) {
        return Err(Error::invalid("sources: vega floor must be positive"));
    }
    let pricers: Vec<HestonPricer> = params.iter().map(HestonPricer::new).collect();
    let knots = knot_times
        .par_iter()
        .map(|&t| build_slice(grid, book, params, &pricers, t, vega_floor))
        .collect::<Result<Vec<_>>>()?;
    Ok(SourceFields {
        n_options: book.len(),
        d,
        nodes: grid.len(),
        knots,
    })
}
