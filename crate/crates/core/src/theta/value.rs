//! Solved fields, interpolation, the ansatz value and optimal quotes.

use std::io::{self, Read, Write};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::Serialize;

use super::grid::{Axis, SpatialGrid};
use super::{packed_index, packed_len, unpack};
use crate::hamiltonian::{optimal_quote, Side};
use crate::market::BookSpec;
use crate::pricing::{GreeksBundle, HestonPricer};
use crate::{Error, Result};

/// Stored time slices of `θ⁰`, `θ¹` and packed `θ²`, ascending in time.
#[derive(Debug)]
pub struct ThetaFields {
    pub grid: SpatialGrid,
    pub trade_size: Vec<f64>,
    pub times: Vec<f64>,
    /// Time-step index of every stored slice.
    pub steps: Vec<usize>,
    pub theta0: Vec<Vec<f64>>,
    pub theta1: Vec<Vec<f64>>,
    pub theta2: Vec<Vec<f64>>,
    clamped: AtomicUsize,
}

impl Clone for ThetaFields {
    fn clone(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            trade_size: self.trade_size.clone(),
            times: self.times.clone(),
            steps: self.steps.clone(),
            theta0: self.theta0.clone(),
            theta1: self.theta1.clone(),
            theta2: self.theta2.clone(),
            clamped: AtomicUsize::new(self.clamped.load(Ordering::Relaxed)),
        }
    }
}

impl PartialEq for ThetaFields {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid
            && self.trade_size == other.trade_size
            && self.times == other.times
            && self.steps == other.steps
            && self.theta0 == other.theta0
            && self.theta1 == other.theta1
            && self.theta2 == other.theta2
    }
}

/// The three θ components at one state; `theta2` is dense row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Components {
    pub theta0: f64,
    pub theta1: Vec<f64>,
    pub theta2: Vec<f64>,
}

impl Components {
    pub fn n(&self) -> usize {
        self.theta1.len()
    }

    /// `θ⁰ + qᵀθ¹ − qᵀθ²q`.
    pub fn value(&self, q: &[f64]) -> f64 {
        let n = self.n();
        let lin: f64 = q.iter().zip(&self.theta1).map(|(a, b)| a * b).sum();
        let mut quad = 0.0;
        for j in 0..n {
            for k in 0..n {
                quad += q[j] * self.theta2[j * n + k] * q[k];
            }
        }
        self.theta0 + lin - quad
    }

    /// `(θ²q)_j`.
    pub fn theta2_q(&self, q: &[f64], j: usize) -> f64 {
        let n = self.n();
        (0..n).map(|k| self.theta2[j * n + k] * q[k]).sum()
    }

    /// Reservation increment `p` entering the Hamiltonian for one side.
    ///
    /// Ask: `θ¹_j − 2(θ²q)_j + zθ²_jj`; bid: `−θ¹_j + 2(θ²q)_j + zθ²_jj`.
    pub fn increment(&self, q: &[f64], j: usize, z: f64, side: Side) -> f64 {
        let n = self.n();
        let lin = self.theta1[j] - 2.0 * self.theta2_q(q, j);
        let curv = z * self.theta2[j * n + j];
        match side {
            Side::Ask => lin + curv,
            Side::Bid => -lin + curv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuoteResult {
    /// Spread `δ*` relative to the model price.
    pub delta: f64,
    /// Absolute quote `O ∓ δ*` (bid below, ask above).
    pub price: f64,
    pub increment: f64,
}

impl ThetaFields {
    pub fn new(
        grid: SpatialGrid,
        trade_size: Vec<f64>,
        times: Vec<f64>,
        steps: Vec<usize>,
        theta0: Vec<Vec<f64>>,
        theta1: Vec<Vec<f64>>,
        theta2: Vec<Vec<f64>>,
    ) -> Self {
        Self {
            grid,
            trade_size,
            times,
            steps,
            theta0,
            theta1,
            theta2,
            clamped: AtomicUsize::new(0),
        }
    }

    pub fn n_options(&self) -> usize {
        self.trade_size.len()
    }

    /// Number of lookups that fell outside the grid hull and were clamped.
    pub fn clamp_count(&self) -> usize {
        self.clamped.load(Ordering::Relaxed)
    }

    /// Dense `θ²` at a node of a stored slice.
    pub fn theta2_dense(&self, slice: usize, node: usize) -> Vec<f64> {
        let n = self.n_options();
        let m2 = packed_len(n);
        let mut out = vec![0.0; n * n];
        unpack(n, &self.theta2[slice][node * m2..(node + 1) * m2], &mut out);
        out
    }

    fn time_weights(&self, t: f64) -> (usize, f64, bool) {
        let ts = &self.times;
        if ts.len() == 1 {
            return (0, 0.0, t != ts[0]);
        }
        let tc = t.clamp(ts[0], ts[ts.len() - 1]);
        let i = ts.partition_point(|&x| x <= tc).clamp(1, ts.len() - 1) - 1;
        let w = (tc - ts[i]) / (ts[i + 1] - ts[i]);
        (i, w, tc != t)
    }

    /// Multilinear corner weights over the spatial axes.
    fn corners(&self, s: &[f64], nu: &[f64]) -> (Vec<(usize, f64)>, bool) {
        let axes: Vec<Axis> = self.grid.axes();
        let strides = self.grid.strides();
        let mut out = vec![(0usize, 1.0f64)];
        let mut clamped = false;
        for (a, ax) in axes.iter().enumerate() {
            let x = if a % 2 == 0 { s[a / 2] } else { nu[a / 2] };
            let (k, w, c) = ax.locate(x);
            clamped |= c;
            let mut next = Vec::with_capacity(out.len() * 2);
            for &(base, wt) in &out {
                let at = base + k * strides[a];
                if w < 1.0 {
                    next.push((at, wt * (1.0 - w)));
                }
                if w > 0.0 {
                    next.push((at + strides[a], wt * w));
                }
            }
            out = next;
        }
        (out, clamped)
    }

    /// Interpolated components at `(t, S, ν)`; outside points are clamped.
    pub fn components(&self, t: f64, s: &[f64], nu: &[f64]) -> Components {
        let n = self.n_options();
        let m2 = packed_len(n);
        let (ti, tw, tc) = self.time_weights(t);
        let (corners, sc) = self.corners(s, nu);
        if tc || sc {
            self.clamped.fetch_add(1, Ordering::Relaxed);
        }
        let mut theta0 = 0.0;
        let mut theta1 = vec![0.0; n];
        let mut packed = vec![0.0; m2];
        let mut slices = vec![(ti, 1.0 - tw)];
        if tw > 0.0 {
            slices.push((ti + 1, tw));
        }
        for &(si, sw) in &slices {
            for &(node, w) in &corners {
                let wt = sw * w;
                theta0 += wt * self.theta0[si][node];
                let t1 = &self.theta1[si][node * n..(node + 1) * n];
                for (o, x) in theta1.iter_mut().zip(t1) {
                    *o += wt * x;
                }
                let t2 = &self.theta2[si][node * m2..(node + 1) * m2];
                for (o, x) in packed.iter_mut().zip(t2) {
                    *o += wt * x;
                }
            }
        }
        let mut theta2 = vec![0.0; n * n];
        unpack(n, &packed, &mut theta2);
        Components {
            theta0,
            theta1,
            theta2,
        }
    }

    /// Ansatz value `u(t, S, ν, q)`.
    pub fn value(&self, t: f64, s: &[f64], nu: &[f64], q: &[f64]) -> Result<f64> {
        if q.len() != self.n_options() {
            return Err(Error::invalid(format!(
                "inventory has {} entries for {} options",
                q.len(),
                self.n_options()
            )));
        }
        Ok(self.components(t, s, nu).value(q))
    }

    /// Optimal quote for option `j` given its current Greeks.
    #[allow(clippy::too_many_arguments)]
    pub fn quote_with_greeks(
        &self,
        book: &BookSpec,
        t: f64,
        s: &[f64],
        nu: &[f64],
        q: &[f64],
        j: usize,
        side: Side,
        greeks: &GreeksBundle,
    ) -> Result<QuoteResult> {
        let comp = self.components(t, s, nu);
        quote_from_components(&comp, book, q, j, side, greeks)
    }

    /// Optimal quote for option `j`, pricing the option at the state.
    #[allow(clippy::too_many_arguments)]
    pub fn quote(
        &self,
        book: &BookSpec,
        pricer: &HestonPricer,
        t: f64,
        s: &[f64],
        nu: &[f64],
        q: &[f64],
        j: usize,
        side: Side,
    ) -> Result<QuoteResult> {
        let o = book
            .options
            .get(j)
            .ok_or_else(|| Error::invalid(format!("option index {j} out of range")))?;
        let i = o.underlying;
        let g = pricer.greeks(t, s[i], nu[i], o.strike, o.maturity)?;
        self.quote_with_greeks(book, t, s, nu, q, j, side, &g)
    }

    /// CSV rows `t,S,nu,component,i,j,value` for the chosen slices.
    ///
    /// Only single-underlying grids are exported.
    pub fn write_csv<W: Write>(&self, mut w: W, slices: &[usize]) -> Result<()> {
        if self.grid.d() != 1 {
            return Err(Error::invalid("field export supports a single underlying only"));
        }
        let n = self.n_options();
        let io = |e: io::Error| Error::invalid(format!("write failed: {e}"));
        writeln!(w, "t,S,nu,component,i,j,value").map_err(io)?;
        for &si in slices {
            let t = self.times[si];
            for node in 0..self.grid.len() {
                let (s, nu) = self.grid.coords(node);
                let (s, nu) = (s[0], nu[0]);
                writeln!(w, "{t},{s},{nu},theta0,0,0,{}", self.theta0[si][node]).map_err(io)?;
                for j in 0..n {
                    writeln!(w, "{t},{s},{nu},theta1,{j},0,{}", self.theta1[si][node * n + j]).map_err(io)?;
                }
                let m2 = packed_len(n);
                for j in 0..n {
                    for k in j..n {
                        let v = self.theta2[si][node * m2 + packed_index(n, j, k)];
                        writeln!(w, "{t},{s},{nu},theta2,{j},{k},{v}").map_err(io)?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Little-endian binary dump of the numeric content (grid description
    /// excluded; it is reconstructed from configuration).
    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        let put_u64 = |w: &mut W, x: u64| w.write_all(&x.to_le_bytes());
        put_u64(&mut w, self.trade_size.len() as u64)?;
        put_u64(&mut w, self.times.len() as u64)?;
        put_u64(&mut w, self.grid.len() as u64)?;
        for &x in &self.trade_size {
            w.write_all(&x.to_le_bytes())?;
        }
        for (k, &t) in self.times.iter().enumerate() {
            w.write_all(&t.to_le_bytes())?;
            put_u64(&mut w, self.steps[k] as u64)?;
        }
        for k in 0..self.times.len() {
            for v in [&self.theta0[k], &self.theta1[k], &self.theta2[k]] {
                for &x in v.iter() {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(grid: SpatialGrid, mut r: R) -> io::Result<Self> {
        let mut b = [0u8; 8];
        let mut get = |r: &mut R| -> io::Result<[u8; 8]> {
            r.read_exact(&mut b)?;
            Ok(b)
        };
        let n = u64::from_le_bytes(get(&mut r)?) as usize;
        let nt = u64::from_le_bytes(get(&mut r)?) as usize;
        let nodes = u64::from_le_bytes(get(&mut r)?) as usize;
        if nodes != grid.len() {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "grid size mismatch"));
        }
        let mut trade_size = Vec::with_capacity(n);
        for _ in 0..n {
            trade_size.push(f64::from_le_bytes(get(&mut r)?));
        }
        let mut times = Vec::with_capacity(nt);
        let mut steps = Vec::with_capacity(nt);
        for _ in 0..nt {
            times.push(f64::from_le_bytes(get(&mut r)?));
            steps.push(u64::from_le_bytes(get(&mut r)?) as usize);
        }
        let read_vec = |r: &mut R, len: usize| -> io::Result<Vec<f64>> {
            let mut buf = vec![0u8; len * 8];
            r.read_exact(&mut buf)?;
            Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
        };
        let (mut t0, mut t1, mut t2) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..nt {
            t0.push(read_vec(&mut r, nodes)?);
            t1.push(read_vec(&mut r, nodes * n)?);
            t2.push(read_vec(&mut r, nodes * packed_len(n))?);
        }
        Ok(Self::new(grid, trade_size, times, steps, t0, t1, t2))
    }
}

/// Quote for option `j` from already interpolated components.
pub fn quote_from_components(
    comp: &Components,
    book: &BookSpec,
    q: &[f64],
    j: usize,
    side: Side,
    greeks: &GreeksBundle,
) -> Result<QuoteResult> {
    if j >= book.len() || q.len() != book.len() {
        return Err(Error::invalid("quote: option index or inventory length out of range"));
    }
    let p = comp.increment(q, j, book.trade_size[j], side);
    let e = optimal_quote(book.intensity[j].side(side), greeks.vega, p)?;
    let price = match side {
        Side::Ask => greeks.price + e.argmax,
        Side::Bid => greeks.price - e.argmax,
    };
    Ok(QuoteResult {
        delta: e.argmax,
        price,
        increment: p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fields() -> ThetaFields {
        let grid = SpatialGrid::new(
            vec![Axis::new(90.0, 110.0, 3).unwrap()],
            vec![Axis::new(0.02, 0.06, 3).unwrap()],
            1.0,
            1,
        )
        .unwrap();
        let n = 2;
        let mk = |scale: f64| -> (Vec<f64>, Vec<f64>, Vec<f64>) {
            let t0: Vec<f64> = (0..9).map(|k| scale * k as f64).collect();
            let t1: Vec<f64> = (0..9 * n).map(|k| scale * 0.1 * k as f64).collect();
            let t2: Vec<f64> = (0..9 * 3).map(|k| scale * (1.0 + 0.01 * k as f64)).collect();
            (t0, t1, t2)
        };
        let (a0, a1, a2) = mk(1.0);
        let (b0, b1, b2) = mk(0.0);
        ThetaFields::new(grid, vec![1.0, 2.0], vec![0.0, 1.0], vec![0, 1], vec![a0, b0], vec![a1, b1], vec![a2, b2])
    }

    #[test]
    fn nodes_reproduce_stored_values() {
        let f = fields();
        for node in 0..9 {
            let (s, nu) = f.grid.coords(node);
            let c = f.components(0.0, &s, &nu);
            let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12 * (1.0 + y.abs()));
            assert!(close(&[c.theta0], &[f.theta0[0][node]]));
            assert!(close(&c.theta1, &f.theta1[0][node * 2..node * 2 + 2]));
            assert!(close(&c.theta2, &f.theta2_dense(0, node)));
        }
        assert_eq!(f.clamp_count(), 0);
    }

    #[test]
    fn polarization_identity() {
        let f = fields();
        let (s, nu) = (vec![97.0], vec![0.031]);
        let q = [0.7, -1.3];
        let c = f.components(0.3, &s, &nu);
        let lhs = f.value(0.3, &s, &nu, &q).unwrap() + f.value(0.3, &s, &nu, &[-0.7, 1.3]).unwrap()
            - 2.0 * f.value(0.3, &s, &nu, &[0.0, 0.0]).unwrap();
        let quad: f64 = (0..2).map(|j| (0..2).map(|k| q[j] * c.theta2[j * 2 + k] * q[k]).sum::<f64>()).sum();
        assert!((lhs + 2.0 * quad).abs() < 1e-12);
        assert_eq!(f.value(0.3, &s, &nu, &[0.0, 0.0]).unwrap(), c.theta0);
    }

    #[test]
    fn out_of_hull_is_clamped_and_counted() {
        let f = fields();
        let inside = f.components(0.0, &[110.0], &[0.06]);
        let outside = f.components(0.0, &[150.0], &[0.5]);
        assert_eq!(inside, outside);
        assert_eq!(f.clamp_count(), 1);
    }

    #[test]
    fn binary_round_trip() {
        let f = fields();
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        let g = ThetaFields::read_binary(f.grid.clone(), buf.as_slice()).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn increments_follow_ansatz_differences() {
        let c = Components {
            theta0: 1.0,
            theta1: vec![0.2, -0.1],
            theta2: vec![0.5, 0.1, 0.1, 0.3],
        };
        let q = [1.5, -2.0];
        let z = 0.8;
        for j in 0..2 {
            let mut up = q;
            up[j] += z;
            let mut dn = q;
            dn[j] -= z;
            let pa = (c.value(&q) - c.value(&dn)) / z;
            let pb = (c.value(&q) - c.value(&up)) / z;
            assert!((c.increment(&q, j, z, Side::Ask) - pa).abs() < 1e-12);
            assert!((c.increment(&q, j, z, Side::Bid) - pb).abs() < 1e-12);
        }
    }
}
