//! Defect of the expanded HJB equation when the quadratic ansatz is
//! substituted for the value function.
//!
//! The spatial operator is evaluated with fourth-order central stencils,
//! the time derivative by the difference of two consecutive stored slices,
//! and every other term at the midpoint of that step. The defect of the
//! solver therefore shrinks with its own truncation error.

use serde::Serialize;

use super::generator::GeneratorMode;
use super::value::ThetaFields;
use super::{packed_index, packed_len, ThetaProblem};
use crate::market::{HestonJumpParams, Measure};
use crate::{Error, Result};

/// Where and at which inventories the defect is sampled.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualProbe {
    /// Inventory vectors (contracts) at which the defect is evaluated.
    pub inventories: Vec<Vec<f64>>,
    /// Physical box per axis, in the grid's axis order `[S_0, ν_0, …]`.
    /// Nodes closer than two cells to the grid boundary are always skipped.
    pub region: Option<Vec<(f64, f64)>>,
}

impl ResidualProbe {
    /// `q = 0`, `±z_j e_j` for every option and the alternating book.
    pub fn standard(trade_size: &[f64]) -> Self {
        let n = trade_size.len();
        let mut inventories = vec![vec![0.0; n]];
        for j in 0..n {
            for sign in [1.0, -1.0] {
                let mut q = vec![0.0; n];
                q[j] = sign * trade_size[j];
                inventories.push(q);
            }
        }
        inventories.push(
            trade_size
                .iter()
                .enumerate()
                .map(|(j, z)| if j % 2 == 0 { *z } else { -*z })
                .collect(),
        );
        Self {
            inventories,
            region: None,
        }
    }

    /// Restrict the sample to `S ∈ s·S₀` and `ν ∈ nu` for every underlying.
    pub fn with_box(mut self, params: &[HestonJumpParams], s: (f64, f64), nu: (f64, f64)) -> Self {
        self.region = Some(
            params
                .iter()
                .flat_map(|p| [(s.0 * p.s0, s.1 * p.s0), nu])
                .collect(),
        );
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    /// Maximum absolute defect over nodes, step pairs and inventories.
    pub max_abs: f64,
    /// Maximum absolute defect of the `θ⁰`, `θ¹` and `θ²` equations.
    pub component_max: [f64; 3],
    pub worst_t: f64,
    pub worst_node: usize,
    pub nodes_checked: usize,
    pub pairs_checked: usize,
}

struct Stencil {
    first: [f64; 5],
    second: [f64; 5],
}

const FOURTH: Stencil = Stencil {
    first: [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0],
    second: [-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0],
};

/// Fourth-order evaluation of the generator on one field component.
struct Operator<'a> {
    problem: &'a ThetaProblem,
    strides: Vec<usize>,
    steps: Vec<f64>,
    spot_on: bool,
    on: bool,
}

impl<'a> Operator<'a> {
    fn new(problem: &'a ThetaProblem) -> Self {
        let axes = problem.grid.axes();
        Self {
            problem,
            strides: problem.grid.strides(),
            steps: axes.iter().map(|a| a.step()).collect(),
            spot_on: problem.config.generator == GeneratorMode::Full,
            on: problem.config.generator != GeneratorMode::Off,
        }
    }

    fn at(&self, f: &[f64], m: usize, c: usize, node: usize, offs: &[(usize, isize)]) -> f64 {
        let mut k = node as isize;
        for &(a, o) in offs {
            k += o * self.strides[a] as isize;
        }
        f[k as usize * m + c]
    }

    fn d1(&self, f: &[f64], m: usize, c: usize, node: usize, a: usize) -> f64 {
        let mut acc = 0.0;
        for (k, w) in FOURTH.first.iter().enumerate() {
            if *w != 0.0 {
                acc += w * self.at(f, m, c, node, &[(a, k as isize - 2)]);
            }
        }
        acc / self.steps[a]
    }

    fn d2(&self, f: &[f64], m: usize, c: usize, node: usize, a: usize) -> f64 {
        let mut acc = 0.0;
        for (k, w) in FOURTH.second.iter().enumerate() {
            acc += w * self.at(f, m, c, node, &[(a, k as isize - 2)]);
        }
        acc / (self.steps[a] * self.steps[a])
    }

    fn dmix(&self, f: &[f64], m: usize, c: usize, node: usize, a: usize, b: usize) -> f64 {
        let mut acc = 0.0;
        for (i, wi) in FOURTH.first.iter().enumerate() {
            for (j, wj) in FOURTH.first.iter().enumerate() {
                if *wi != 0.0 && *wj != 0.0 {
                    acc += wi * wj * self.at(f, m, c, node, &[(a, i as isize - 2), (b, j as isize - 2)]);
                }
            }
        }
        acc / (self.steps[a] * self.steps[b])
    }

    /// Four-point Lagrange interpolation along a spot axis.
    fn shifted(&self, f: &[f64], m: usize, c: usize, node: usize, a: usize, x: f64) -> f64 {
        let ax = self.problem.grid.axes()[a];
        let k0 = (node / self.strides[a]) % ax.n;
        let pos = (x - ax.lo) / ax.step();
        let base = (pos.floor() as isize - 1).clamp(0, ax.n as isize - 4);
        let mut acc = 0.0;
        for i in 0..4 {
            let xi = (base + i) as f64;
            let mut l = 1.0;
            for j in 0..4 {
                if j != i {
                    let xj = (base + j) as f64;
                    l *= (pos - xj) / (xi - xj);
                }
            }
            acc += l * self.at(f, m, c, node, &[(a, base + i - k0 as isize)]);
        }
        acc
    }

    fn apply(&self, f: &[f64], m: usize, c: usize, node: usize) -> f64 {
        if !self.on {
            return 0.0;
        }
        let p = self.problem;
        let d = p.grid.d();
        let (s, nu) = p.grid.coords(node);
        let coeff: Vec<_> = (0..d)
            .map(|i| p.params[i].coefficients(Measure::Physical, 0.0, s[i], nu[i]))
            .collect();
        let sig_s = &p.corr.sigma_s;
        let sig_nu = &p.corr.sigma_nu;
        let mut out = 0.0;
        for i in 0..d {
            let cf = &coeff[i];
            let (sa, na) = (2 * i, 2 * i + 1);
            out += cf.drift_nu * self.d1(f, m, c, node, na)
                + 0.5 * cf.vol_nu * cf.vol_nu * sig_nu[i][i] * self.d2(f, m, c, node, na);
            if self.spot_on {
                out += cf.drift_s * self.d1(f, m, c, node, sa)
                    + 0.5 * cf.vol_s * cf.vol_s * sig_s[i][i] * self.d2(f, m, c, node, sa)
                    + p.params[i].rho * cf.vol_s * cf.vol_nu * self.dmix(f, m, c, node, sa, na);
                let here = f[node * m + c];
                let jump = &p.params[i].jump;
                if jump.is_active() {
                    for mk in &jump.marks {
                        let v = self.shifted(f, m, c, node, sa, s[i] + mk.size);
                        out += jump.rate * mk.prob * (v - here);
                    }
                }
            }
            for k in (i + 1)..d {
                let ck = &coeff[k];
                if self.spot_on && sig_s[i][k] != 0.0 {
                    out += sig_s[i][k] * cf.vol_s * ck.vol_s * self.dmix(f, m, c, node, sa, 2 * k);
                }
                if sig_nu[i][k] != 0.0 {
                    out += sig_nu[i][k] * cf.vol_nu * ck.vol_nu * self.dmix(f, m, c, node, na, 2 * k + 1);
                }
            }
        }
        out
    }
}

/// Evaluate the defect on every stored pair of consecutive slices.
///
/// The fields must have been solved with `store_pairs` so that each stored
/// step `n` is followed by step `n + 1`.
pub fn residual_check(problem: &ThetaProblem, fields: &ThetaFields, probe: &ResidualProbe) -> Result<ResidualReport> {
    let n = problem.n_options();
    let d = problem.grid.d();
    let m2 = packed_len(n);
    if fields.n_options() != n || fields.grid != problem.grid {
        return Err(Error::invalid("residual: fields were solved on a different problem"));
    }
    if probe.inventories.iter().any(|q| q.len() != n) {
        return Err(Error::invalid("residual: inventory length differs from the book"));
    }
    let pairs: Vec<usize> = (0..fields.steps.len().saturating_sub(1))
        .filter(|&k| fields.steps[k + 1] == fields.steps[k] + 1)
        .collect();
    if pairs.is_empty() {
        return Err(Error::invalid("residual: no consecutive slice pairs stored (enable store_pairs)"));
    }

    let axes = problem.grid.axes();
    let nodes: Vec<usize> = (0..problem.grid.len())
        .filter(|&node| {
            let idx = problem.grid.unravel(node);
            idx.iter().zip(&axes).enumerate().all(|(a, (&k, ax))| {
                let x = ax.node(k);
                let inside = probe.region.as_ref().is_none_or(|r| x >= r[a].0 && x <= r[a].1);
                k >= 2 && k + 2 < ax.n && inside
            })
        })
        .collect();
    if nodes.is_empty() {
        return Err(Error::invalid("residual: probe region contains no interior node"));
    }

    let op = Operator::new(problem);
    let w = problem.weights();
    let z = &problem.book.trade_size;
    let pen = problem.pen_scale();
    let sig = &problem.corr.sigma_nu;
    let mut report = ResidualReport {
        max_abs: 0.0,
        component_max: [0.0; 3],
        worst_t: 0.0,
        worst_node: 0,
        nodes_checked: nodes.len(),
        pairs_checked: pairs.len(),
    };

    let mut t2 = [vec![0.0; n * n], vec![0.0; n * n]];
    let mut t1 = [vec![0.0; n], vec![0.0; n]];
    let mut t0 = [0.0; 2];
    let mut lt2 = [vec![0.0; n * n], vec![0.0; n * n]];
    let mut lt1 = [vec![0.0; n], vec![0.0; n]];
    let mut lt0 = [0.0; 2];
    let mut du = vec![0.0; n];
    let mut rq = vec![0.0; d];
    for &k in &pairs {
        let (ta, tb) = (fields.times[k], fields.times[k + 1]);
        let dt = tb - ta;
        let tm = 0.5 * (ta + tb);
        let src = problem.sources.at(tm);
        for &node in &nodes {
            for h in 0..2 {
                let sl = k + h;
                t0[h] = fields.theta0[sl][node];
                lt0[h] = op.apply(&fields.theta0[sl], 1, 0, node);
                for j in 0..n {
                    t1[h][j] = fields.theta1[sl][node * n + j];
                    lt1[h][j] = op.apply(&fields.theta1[sl], n, j, node);
                }
                for j in 0..n {
                    for l in j..n {
                        let c = packed_index(n, j, l);
                        let v = fields.theta2[sl][node * m2 + c];
                        let lv = op.apply(&fields.theta2[sl], m2, c, node);
                        t2[h][j * n + l] = v;
                        t2[h][l * n + j] = v;
                        lt2[h][j * n + l] = lv;
                        lt2[h][l * n + j] = lv;
                    }
                }
            }

            // Linear part, per component.
            let lin0 = (t0[1] - t0[0]) / dt + 0.5 * (lt0[0] + lt0[1]);
            let lin1: Vec<f64> = (0..n)
                .map(|j| (t1[1][j] - t1[0][j]) / dt + 0.5 * (lt1[0][j] + lt1[1][j]))
                .collect();
            let lin2: Vec<f64> = (0..n * n)
                .map(|i| (t2[1][i] - t2[0][i]) / dt + 0.5 * (lt2[0][i] + lt2[1][i]))
                .collect();

            for q in &probe.inventories {
                let mut total = 0.0;
                // ∂_t u + L u.
                total += lin0;
                for j in 0..n {
                    total += q[j] * lin1[j];
                    for l in 0..n {
                        total -= q[j] * lin2[j * n + l] * q[l];
                    }
                }
                // qᵀ𝒢 − (γ/2)(Rᵀq)ᵀ Σ^ν (Rᵀq).
                rq.iter_mut().for_each(|x| *x = 0.0);
                for j in 0..n {
                    let at = node * n + j;
                    total += q[j] * src.g[at];
                    for i in 0..d {
                        rq[i] += src.r[at * d + i] * q[j];
                    }
                }
                let mut quad = 0.0;
                for i in 0..d {
                    for l in 0..d {
                        quad += rq[i] * sig[i][l] * rq[l];
                    }
                }
                total -= pen * quad;
                // Second-order expansion of the Hamiltonians, averaged over
                // the two slices.
                for h in 0..2 {
                    for j in 0..n {
                        let t2q: f64 = (0..n).map(|l| t2[h][j * n + l] * q[l]).sum();
                        du[j] = t1[h][j] - 2.0 * t2q;
                    }
                    let mut ham = 0.0;
                    for j in 0..n {
                        let at = node * n + j;
                        let (hb, ha) = (src.h_bid[at], src.h_ask[at]);
                        let duu = -2.0 * t2[h][j * n + j];
                        ham += w[j]
                            * (hb[0] + ha[0] + (ha[1] - hb[1]) * du[j] + 0.5 * (ha[2] + hb[2]) * du[j] * du[j]
                                - 0.5 * z[j] * (ha[1] + hb[1]) * duu);
                    }
                    total += 0.5 * ham;
                }
                let r = total.abs();
                if r > report.max_abs || r.is_nan() {
                    report.max_abs = r;
                    report.worst_t = tm;
                    report.worst_node = node;
                }
            }

            // Component defects from the same pieces.
            let mut comp = [0.0f64; 3];
            let mut c1 = lin1.clone();
            let mut c2 = lin2.clone();
            let mut c0 = lin0;
            for h in 0..2 {
                for j in 0..n {
                    let at = node * n + j;
                    let (hb, ha) = (src.h_bid[at], src.h_ask[at]);
                    let (d1, s1, s2) = (ha[1] - hb[1], ha[1] + hb[1], ha[2] + hb[2]);
                    c0 += 0.5
                        * w[j]
                        * (hb[0] + ha[0] + d1 * t1[h][j] + 0.5 * s2 * t1[h][j] * t1[h][j] + z[j] * s1 * t2[h][j * n + j]);
                    for l in 0..n {
                        // θ¹ row l picks up −2 θ²_{lj} w_j (D1 + S2 θ¹_j).
                        c1[l] -= t2[h][l * n + j] * w[j] * (d1 + s2 * t1[h][j]);
                        for r in 0..n {
                            c2[l * n + r] -= t2[h][l * n + j] * w[j] * s2 * t2[h][j * n + r];
                        }
                    }
                }
            }
            for j in 0..n {
                c1[j] += src.g[node * n + j];
                for l in 0..n {
                    let v: f64 = (0..d)
                        .flat_map(|i| (0..d).map(move |k2| (i, k2)))
                        .map(|(i, k2)| src.r[(node * n + j) * d + i] * sig[i][k2] * src.r[(node * n + l) * d + k2])
                        .sum();
                    c2[j * n + l] += pen * v;
                }
            }
            comp[0] = c0.abs();
            comp[1] = c1.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            comp[2] = c2.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            for i in 0..3 {
                report.component_max[i] = report.component_max[i].max(comp[i]);
            }
        }
    }
    Ok(report)
}
