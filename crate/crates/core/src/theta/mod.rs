//! Solver for the quadratic-inventory approximation of the dealer's value
//! function,
//!
//! ```text
//! u(t, S, ν, q) = θ⁰(t, S, ν) + qᵀθ¹(t, S, ν) − qᵀθ²(t, S, ν) q.
//! ```
//!
//! Substituting the ansatz into the second-order expansion of the HJB
//! equation and matching powers of `q` gives, with trade-size weights `w`,
//! `Hs = H_a + H_b`, `D1 = H_a′ − H_b′`, `S1 = H_a′ + H_b′`,
//! `S2 = H_a″ + H_b″` (all at `p = 0`):
//!
//! ```text
//! ∂_t θ² + L̄θ² + (γ/2) R Σ^ν Rᵀ − 2 θ² diag(w S2) θ² = 0
//! ∂_t θ¹ + L̄θ¹ + 𝒢 − 2 θ² (w ∘ (D1 + S2 ∘ θ¹)) = 0
//! ∂_t θ⁰ + L̄θ⁰ + Σ_j w_j [Hs + D1 θ¹_j + ½ S2 (θ¹_j)² + z_j S1 θ²_jj] = 0
//! ```
//!
//! with zero terminal data. `θ²` is stored as its packed upper triangle.

pub mod generator;
pub mod grid;
pub mod residual;
pub mod sources;
pub mod stepper;
mod value;

use serde::{Deserialize, Serialize};

pub use generator::{apply_generator, Generator, GeneratorMode};
pub use grid::{Axis, SpatialGrid};
pub use residual::{residual_check, ResidualProbe, ResidualReport};
pub use sources::{build_sources, SourceFields, SourceSlice};
pub use value::{quote_from_components, Components, QuoteResult, ThetaFields};

use crate::market::{validate, BookSpec, CorrelationStructure, HestonJumpParams};
use crate::{Error, Result};
use stepper::{mcs_step, Workspace};

/// Scaling of the penalty source in the `θ²` equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyForm {
    /// `(γ/2) R Σ^ν Rᵀ`.
    #[default]
    RiccatiFull,
    /// The single-underlying variant divided by the number of options.
    PerOptionScaled,
}

/// Weight multiplying each option's Hamiltonian terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HamiltonianScaling {
    /// `w_j = z_j`: revenue per fill scales with the trade size.
    #[default]
    TradeSize,
    /// `w_j = 1`.
    AsPrinted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThetaConfig {
    pub s_nodes: usize,
    pub nu_nodes: usize,
    /// Spot axis is `[s_lo_ratio·S₀, s_hi_ratio·S₀]`.
    pub s_lo_ratio: f64,
    pub s_hi_ratio: f64,
    pub nu_lo: f64,
    pub nu_hi: f64,
    pub steps: usize,
    pub gamma: f64,
    pub penalty_form: PenaltyForm,
    pub hamiltonian_scaling: HamiltonianScaling,
    /// Implicitness parameter of the ADI scheme.
    pub adi_theta: f64,
    /// Sources are evaluated every this many steps and interpolated in time.
    pub source_knot_stride: usize,
    /// Evaluate sources once at `t = 0` and hold them constant.
    pub frozen_sources: bool,
    pub generator: GeneratorMode,
    pub store_stride: usize,
    /// Also keep the slice one step after every stored slice.
    pub store_pairs: bool,
    pub blowup_bound: f64,
    pub vega_floor: f64,
}

impl Default for ThetaConfig {
    fn default() -> Self {
        Self {
            s_nodes: 60,
            nu_nodes: 40,
            s_lo_ratio: 0.8,
            s_hi_ratio: 1.2,
            nu_lo: 0.005,
            nu_hi: 0.15,
            steps: 200,
            gamma: 2e-5,
            penalty_form: PenaltyForm::RiccatiFull,
            hamiltonian_scaling: HamiltonianScaling::TradeSize,
            adi_theta: 1.0 / 3.0,
            source_knot_stride: 10,
            frozen_sources: false,
            generator: GeneratorMode::Full,
            store_stride: 10,
            store_pairs: false,
            blowup_bound: 1e10,
            vega_floor: 1e-8,
        }
    }
}

impl ThetaConfig {
    pub fn grid(&self, params: &[HestonJumpParams], horizon: f64) -> Result<SpatialGrid> {
        let mut s_axes = Vec::with_capacity(params.len());
        let mut nu_axes = Vec::with_capacity(params.len());
        for p in params {
            s_axes.push(Axis::new(self.s_lo_ratio * p.s0, self.s_hi_ratio * p.s0, self.s_nodes)?);
            nu_axes.push(Axis::new(self.nu_lo, self.nu_hi, self.nu_nodes)?);
        }
        SpatialGrid::new(s_axes, nu_axes, horizon, self.steps)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.gamma >= 0.0) {
            return Err(Error::invalid("gamma must be >= 0"));
        }
        if !(self.adi_theta > 0.0 && self.adi_theta <= 1.0) {
            return Err(Error::invalid("adi_theta must lie in (0, 1]"));
        }
        if self.source_knot_stride == 0 || self.store_stride == 0 {
            return Err(Error::invalid("strides must be positive"));
        }
        if !(self.blowup_bound > 0.0) {
            return Err(Error::invalid("blowup_bound must be positive"));
        }
        Ok(())
    }
}

pub fn packed_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Position of `(j, k)` in the packed upper triangle, row by row.
pub fn packed_index(n: usize, j: usize, k: usize) -> usize {
    let (a, b) = if j <= k { (j, k) } else { (k, j) };
    a * n - a * (a + 1) / 2 + b
}

/// Per-node source data combined with the weights, at one time.
#[derive(Debug, Clone, Default)]
struct Derived {
    pen: Vec<f64>,
    c2: Vec<f64>,
    a1: Vec<f64>,
    s1z: Vec<f64>,
    g: Vec<f64>,
    h0: Vec<f64>,
}

/// Grid, generator and sources for one θ solve.
#[derive(Debug, Clone)]
pub struct ThetaProblem {
    pub grid: SpatialGrid,
    pub params: Vec<HestonJumpParams>,
    pub corr: CorrelationStructure,
    pub book: BookSpec,
    pub config: ThetaConfig,
    pub sources: SourceFields,
    gen: Generator,
    weights: Vec<f64>,
}

impl ThetaProblem {
    /// Build the problem on the grid described by `config`.
    pub fn new(
        params: &[HestonJumpParams],
        corr: &CorrelationStructure,
        book: &BookSpec,
        horizon: f64,
        config: &ThetaConfig,
    ) -> Result<Self> {
        let grid = config.grid(params, horizon)?;
        Self::with_grid(grid, params, corr, book, config)
    }

    pub fn with_grid(
        grid: SpatialGrid,
        params: &[HestonJumpParams],
        corr: &CorrelationStructure,
        book: &BookSpec,
        config: &ThetaConfig,
    ) -> Result<Self> {
        config.check()?;
        validate(params, corr, book, grid.horizon).into_result()?;
        grid.check_contains(params)?;
        let gen = Generator::new(&grid, params, corr, config.generator)?;
        let knots = Self::knot_times(&grid, config);
        let sources = build_sources(&grid, book, params, corr, &knots, config.vega_floor)?;
        let weights = match config.hamiltonian_scaling {
            HamiltonianScaling::TradeSize => book.trade_size.clone(),
            HamiltonianScaling::AsPrinted => vec![1.0; book.len()],
        };
        Ok(Self {
            grid,
            params: params.to_vec(),
            corr: corr.clone(),
            book: book.clone(),
            config: config.clone(),
            sources,
            gen,
            weights,
        })
    }

    pub fn knot_times(grid: &SpatialGrid, config: &ThetaConfig) -> Vec<f64> {
        if config.frozen_sources {
            return vec![0.0];
        }
        let mut out: Vec<f64> = (0..grid.steps)
            .step_by(config.source_knot_stride)
            .map(|n| grid.time(n))
            .collect();
        out.push(grid.horizon);
        out
    }

    pub fn generator(&self) -> &Generator {
        &self.gen
    }

    /// Hamiltonian weights `w_j`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_options(&self) -> usize {
        self.book.len()
    }

    pub(crate) fn pen_scale(&self) -> f64 {
        let base = 0.5 * self.config.gamma;
        match self.config.penalty_form {
            PenaltyForm::RiccatiFull => base,
            PenaltyForm::PerOptionScaled => base / self.n_options() as f64,
        }
    }

    fn derive(&self, slice: &SourceSlice, out: &mut Derived) {
        let n = self.n_options();
        let d = self.grid.d();
        let nodes = self.grid.len();
        let m2 = packed_len(n);
        out.pen.resize(nodes * m2, 0.0);
        for v in [&mut out.c2, &mut out.a1, &mut out.s1z, &mut out.g] {
            v.resize(nodes * n, 0.0);
        }
        out.h0.resize(nodes, 0.0);
        let scale = self.pen_scale();
        let sig = &self.corr.sigma_nu;
        let mut rs = vec![0.0; n * d];
        for node in 0..nodes {
            let mut h0 = 0.0;
            for j in 0..n {
                let at = node * n + j;
                let (hb, ha) = (slice.h_bid[at], slice.h_ask[at]);
                let w = self.weights[j];
                out.c2[at] = w * (hb[2] + ha[2]);
                out.a1[at] = w * (ha[1] - hb[1]);
                out.s1z[at] = w * self.book.trade_size[j] * (ha[1] + hb[1]);
                out.g[at] = slice.g[at];
                h0 += w * (hb[0] + ha[0]);
            }
            out.h0[node] = h0;
            // (R Σ^ν)_{j,l}
            let r = &slice.r[node * n * d..(node + 1) * n * d];
            for j in 0..n {
                for l in 0..d {
                    rs[j * d + l] = (0..d).map(|i| r[j * d + i] * sig[i][l]).sum();
                }
            }
            let pen = &mut out.pen[node * m2..(node + 1) * m2];
            let mut idx = 0;
            for j in 0..n {
                for k in j..n {
                    let v: f64 = (0..d).map(|l| rs[j * d + l] * r[k * d + l]).sum();
                    pen[idx] = scale * v;
                    idx += 1;
                }
            }
        }
    }

    fn source_theta2(&self, der: &Derived, t2: &[f64], out: &mut [f64]) {
        let n = self.n_options();
        let m2 = packed_len(n);
        let mut dense = vec![0.0; 2 * n * n];
        for node in 0..self.grid.len() {
            let u = &t2[node * m2..(node + 1) * m2];
            let (a, b) = dense.split_at_mut(n * n);
            unpack(n, u, a);
            let c2 = &der.c2[node * n..(node + 1) * n];
            for j in 0..n {
                for m in 0..n {
                    b[j * n + m] = a[j * n + m] * c2[m];
                }
            }
            let pen = &der.pen[node * m2..(node + 1) * m2];
            let o = &mut out[node * m2..(node + 1) * m2];
            let mut idx = 0;
            for j in 0..n {
                let bj = &b[j * n..(j + 1) * n];
                for k in j..n {
                    let mut acc = 0.0;
                    for m in 0..n {
                        acc += bj[m] * a[m * n + k];
                    }
                    o[idx] += pen[idx] - 2.0 * acc;
                    idx += 1;
                }
            }
        }
    }

    fn source_theta1(&self, der: &Derived, t2: &[f64], t1: &[f64], out: &mut [f64]) {
        let n = self.n_options();
        let m2 = packed_len(n);
        let mut v = vec![0.0; n];
        for node in 0..self.grid.len() {
            let th1 = &t1[node * n..(node + 1) * n];
            let th2 = &t2[node * m2..(node + 1) * m2];
            for k in 0..n {
                let at = node * n + k;
                v[k] = der.a1[at] + der.c2[at] * th1[k];
            }
            let o = &mut out[node * n..(node + 1) * n];
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += th2[packed_index(n, j, k)] * v[k];
                }
                o[j] += der.g[node * n + j] - 2.0 * acc;
            }
        }
    }

    fn source_theta0(&self, der: &Derived, t2: &[f64], t1: &[f64], out: &mut [f64]) {
        let n = self.n_options();
        let m2 = packed_len(n);
        for node in 0..self.grid.len() {
            let th1 = &t1[node * n..(node + 1) * n];
            let th2 = &t2[node * m2..(node + 1) * m2];
            let mut acc = der.h0[node];
            for j in 0..n {
                let at = node * n + j;
                acc += der.a1[at] * th1[j]
                    + 0.5 * der.c2[at] * th1[j] * th1[j]
                    + der.s1z[at] * th2[packed_index(n, j, j)];
            }
            out[node] += acc;
        }
    }

    fn stored(&self, n: usize, stride: usize, pairs: bool) -> bool {
        n % stride == 0 || n == self.grid.steps || (pairs && n % stride == 1)
    }

    /// Backward march. Blocks not supplied through `given2`/`given1` are
    /// solved; `want1`/`want0` switch the lower blocks on.
    fn march(
        &self,
        given2: Option<&[Vec<f64>]>,
        given1: Option<&[Vec<f64>]>,
        want1: bool,
        want0: bool,
        stride: usize,
        pairs: bool,
    ) -> Result<March> {
        let n = self.n_options();
        let nodes = self.grid.len();
        let m2 = packed_len(n);
        let steps = self.grid.steps;
        let dt = self.grid.dt();
        let theta = self.config.adi_theta;
        for g in [given2, given1].into_iter().flatten() {
            if g.len() != steps + 1 {
                return Err(Error::invalid("supplied slices must cover every time step"));
            }
        }

        let mut t2 = vec![0.0; nodes * m2];
        let mut t1 = vec![0.0; nodes * n];
        let mut t0 = vec![0.0; nodes];
        let mut t2_old = t2.clone();
        let mut t1_old = t1.clone();
        let mut out = March::default();
        let push = |out: &mut March, idx: usize, t2: &[f64], t1: &[f64], t0: &[f64]| {
            out.index.push(idx);
            out.theta2.push(t2.to_vec());
            if want1 {
                out.theta1.push(t1.to_vec());
            }
            if want0 {
                out.theta0.push(t0.to_vec());
            }
        };
        push(&mut out, steps, &t2, &t1, &t0);

        let mut slice = self.sources.at(self.grid.time(steps));
        let mut der_old = Derived::default();
        let mut der_new = Derived::default();
        self.derive(&slice, &mut der_old);
        let mut ws2 = Workspace::default();
        let mut ws1 = Workspace::default();
        let mut ws0 = Workspace::default();

        for step in (0..steps).rev() {
            let t_new = self.grid.time(step);
            self.sources.interpolate_into(t_new, &mut slice);
            self.derive(&slice, &mut der_new);

            t2_old.copy_from_slice(&t2);
            match given2 {
                Some(g) => t2.copy_from_slice(&g[step]),
                None => mcs_step(
                    &self.gen,
                    theta,
                    dt,
                    &mut t2,
                    m2,
                    &mut |u, o| self.source_theta2(&der_old, u, o),
                    &mut |u, o| self.source_theta2(&der_new, u, o),
                    &mut ws2,
                ),
            }

            if want1 || want0 {
                t1_old.copy_from_slice(&t1);
                match given1 {
                    Some(g) => t1.copy_from_slice(&g[step]),
                    None => mcs_step(
                        &self.gen,
                        theta,
                        dt,
                        &mut t1,
                        n,
                        &mut |u, o| self.source_theta1(&der_old, &t2_old, u, o),
                        &mut |u, o| self.source_theta1(&der_new, &t2, u, o),
                        &mut ws1,
                    ),
                }
            }

            if want0 {
                mcs_step(
                    &self.gen,
                    theta,
                    dt,
                    &mut t0,
                    1,
                    &mut |_, o| self.source_theta0(&der_old, &t2_old, &t1_old, o),
                    &mut |_, o| self.source_theta0(&der_new, &t2, &t1, o),
                    &mut ws0,
                );
            }

            self.guard(t_new, &t2, &t1, &t0)?;
            std::mem::swap(&mut der_old, &mut der_new);
            if self.stored(step, stride, pairs) {
                push(&mut out, step, &t2, &t1, &t0);
            }
        }
        out.reverse();
        Ok(out)
    }

    fn guard(&self, t: f64, t2: &[f64], t1: &[f64], t0: &[f64]) -> Result<()> {
        let bound = self.config.blowup_bound;
        let max2 = t2.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if !max2.is_finite() || max2 > bound {
            return Err(Error::Blowup { t, value: max2, bound });
        }
        if t1.iter().chain(t0).any(|x| !x.is_finite()) {
            return Err(Error::Blowup {
                t,
                value: f64::NAN,
                bound,
            });
        }
        Ok(())
    }

    /// Solve the `θ²` equation, keeping every time slice (index = step).
    pub fn solve_theta2(&self) -> Result<Vec<Vec<f64>>> {
        Ok(self.march(None, None, false, false, 1, false)?.theta2)
    }

    /// Solve the `θ¹` equation given every `θ²` slice.
    pub fn solve_theta1(&self, theta2: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        Ok(self.march(Some(theta2), None, true, false, 1, false)?.theta1)
    }

    /// Solve the `θ⁰` equation given every `θ¹` and `θ²` slice.
    pub fn solve_theta0(&self, theta1: &[Vec<f64>], theta2: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        Ok(self.march(Some(theta2), Some(theta1), false, true, 1, false)?.theta0)
    }

    /// Solve all three blocks in one backward pass, storing slices per the
    /// configured stride.
    pub fn solve_system(&self) -> Result<ThetaFields> {
        let m = self.march(None, None, true, true, self.config.store_stride, self.config.store_pairs)?;
        let times = m.index.iter().map(|&i| self.grid.time(i)).collect();
        Ok(ThetaFields::new(
            self.grid.clone(),
            self.book.trade_size.clone(),
            times,
            m.index,
            m.theta0,
            m.theta1,
            m.theta2,
        ))
    }
}

#[derive(Debug, Default)]
struct March {
    index: Vec<usize>,
    theta2: Vec<Vec<f64>>,
    theta1: Vec<Vec<f64>>,
    theta0: Vec<Vec<f64>>,
}

impl March {
    fn reverse(&mut self) {
        self.index.reverse();
        self.theta2.reverse();
        self.theta1.reverse();
        self.theta0.reverse();
    }
}

/// Expand a packed upper triangle into a dense symmetric matrix.
pub fn unpack(n: usize, packed: &[f64], dense: &mut [f64]) {
    let mut idx = 0;
    for j in 0..n {
        for k in j..n {
            dense[j * n + k] = packed[idx];
            dense[k * n + j] = packed[idx];
            idx += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packing_round_trip() {
        let n = 4;
        let mut seen = vec![false; packed_len(n)];
        for j in 0..n {
            for k in j..n {
                let i = packed_index(n, j, k);
                assert_eq!(i, packed_index(n, k, j));
                assert!(!seen[i]);
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
        let packed: Vec<f64> = (0..packed_len(n)).map(|i| i as f64).collect();
        let mut dense = vec![0.0; n * n];
        unpack(n, &packed, &mut dense);
        for j in 0..n {
            for k in 0..n {
                assert_eq!(dense[j * n + k], packed[packed_index(n, j, k)]);
            }
        }
    }
}
