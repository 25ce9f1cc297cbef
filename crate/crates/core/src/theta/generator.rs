//! Finite-difference discretization of the ℙ-generator on a [`SpatialGrid`].
//!
//! First derivatives use central differences inside the grid and one-sided
//! differences on the boundary; second derivatives are central inside and
//! zero on the boundary (linear extrapolation). Mixed derivatives are the
//! product of the two central stencils and vanish on the boundary. Spot jumps are an exact
//! finite sum over the marks, with linear interpolation (or extrapolation)
//! of the field at shifted spots.

use serde::{Deserialize, Serialize};

use super::grid::SpatialGrid;
use crate::linalg::solve_tridiagonal_multi;
use crate::market::{CorrelationStructure, HestonJumpParams, Measure};
use crate::{Error, Result};

/// Which parts of the generator are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorMode {
    #[default]
    Full,
    /// Drop every spot derivative and the jump term (spot held fixed).
    FrozenSpot,
    /// No spatial operator at all; each node evolves independently.
    Off,
}

/// One-dimensional three-point operator along one axis, stored per node.
#[derive(Debug, Clone)]
struct AxisOperator {
    stride: usize,
    n: usize,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Debug, Clone)]
struct FirstStencil {
    /// Node offsets of the `+` and `−` taps and the scale, per axis index.
    plus: Vec<isize>,
    minus: Vec<isize>,
    scale: Vec<f64>,
}

impl FirstStencil {
    fn new(n: usize, h: f64, stride: usize) -> Self {
        let s = stride as isize;
        let mut plus = Vec::with_capacity(n);
        let mut minus = Vec::with_capacity(n);
        let mut scale = Vec::with_capacity(n);
        for i in 0..n {
            if i == 0 {
                plus.push(s);
                minus.push(0);
                scale.push(1.0 / h);
            } else if i == n - 1 {
                plus.push(0);
                minus.push(-s);
                scale.push(1.0 / h);
            } else {
                plus.push(s);
                minus.push(-s);
                scale.push(0.5 / h);
            }
        }
        Self { plus, minus, scale }
    }
}

#[derive(Debug, Clone)]
struct MixedTerm {
    ax: usize,
    ay: usize,
    coef: Vec<f64>,
}

#[derive(Debug, Clone)]
struct JumpTerm {
    axis: usize,
    /// Per mark: `rate·prob` and per axis index the `(k, w)` interpolation.
    marks: Vec<(f64, Vec<(usize, f64)>)>,
}

/// Discretized generator `L̄` for one set of model parameters.
#[derive(Debug, Clone)]
pub struct Generator {
    nodes: usize,
    shape: Vec<usize>,
    strides: Vec<usize>,
    ops: Vec<(usize, AxisOperator)>,
    first: Vec<FirstStencil>,
    mixed: Vec<MixedTerm>,
    jumps: Vec<JumpTerm>,
}

impl Generator {
    pub fn new(
        grid: &SpatialGrid,
        params: &[HestonJumpParams],
        corr: &CorrelationStructure,
        mode: GeneratorMode,
    ) -> Result<Self> {
        let d = grid.d();
        if params.len() != d || corr.dim() != d {
            return Err(Error::invalid(format!(
                "generator: {} parameter sets and {}-dimensional correlation for {d} underlyings",
                params.len(),
                corr.dim()
            )));
        }
        let axes = grid.axes();
        let shape = grid.shape();
        let strides = grid.strides();
        let nodes = grid.len();
        let first: Vec<FirstStencil> = axes
            .iter()
            .zip(&strides)
            .map(|(a, &s)| FirstStencil::new(a.n, a.step(), s))
            .collect();
        let mut gen = Self {
            nodes,
            shape: shape.clone(),
            strides: strides.clone(),
            ops: Vec::new(),
            first,
            mixed: Vec::new(),
            jumps: Vec::new(),
        };
        if mode == GeneratorMode::Off {
            return Ok(gen);
        }
        let spot_on = mode == GeneratorMode::Full;

        // Coefficients at every node.
        let mut coeff = Vec::with_capacity(nodes);
        for node in 0..nodes {
            let (s, nu) = grid.coords(node);
            let c: Vec<_> = (0..d)
                .map(|i| params[i].coefficients(Measure::Physical, 0.0, s[i], nu[i]))
                .collect();
            coeff.push(c);
        }
        let idx_of = |node: usize, axis: usize| (node / strides[axis]) % shape[axis];

        for (axis, ax) in axes.iter().enumerate() {
            let i = axis / 2;
            let is_spot = axis % 2 == 0;
            if is_spot && !spot_on {
                continue;
            }
            let h = ax.step();
            let mut op = AxisOperator {
                stride: strides[axis],
                n: ax.n,
                lower: vec![0.0; nodes],
                diag: vec![0.0; nodes],
                upper: vec![0.0; nodes],
            };
            for node in 0..nodes {
                let c = &coeff[node][i];
                let (b, diff) = if is_spot {
                    (c.drift_s, 0.5 * c.vol_s * c.vol_s * corr.sigma_s[i][i])
                } else {
                    (c.drift_nu, 0.5 * c.vol_nu * c.vol_nu * corr.sigma_nu[i][i])
                };
                let k = idx_of(node, axis);
                if k == 0 {
                    op.diag[node] = -b / h;
                    op.upper[node] = b / h;
                } else if k == ax.n - 1 {
                    op.lower[node] = -b / h;
                    op.diag[node] = b / h;
                } else {
                    op.lower[node] = -0.5 * b / h + diff / (h * h);
                    op.diag[node] = -2.0 * diff / (h * h);
                    op.upper[node] = 0.5 * b / h + diff / (h * h);
                }
            }
            gen.ops.push((axis, op));
        }

        let on_edge = |node: usize, axis: usize| {
            let k = idx_of(node, axis);
            k == 0 || k == shape[axis] - 1
        };
        let mut push_mixed = |ax: usize, ay: usize, f: &dyn Fn(usize) -> f64| {
            let coef: Vec<f64> = (0..nodes)
                .map(|n| if on_edge(n, ax) || on_edge(n, ay) { 0.0 } else { f(n) })
                .collect();
            if coef.iter().any(|&c| c != 0.0) {
                gen.mixed.push(MixedTerm { ax, ay, coef });
            }
        };
        for i in 0..d {
            if spot_on {
                let rho = params[i].rho;
                push_mixed(2 * i, 2 * i + 1, &|n| rho * coeff[n][i].vol_nu * coeff[n][i].vol_s);
            }
            for k in (i + 1)..d {
                if spot_on {
                    let c = corr.sigma_s[i][k];
                    push_mixed(2 * i, 2 * k, &|n| c * coeff[n][i].vol_s * coeff[n][k].vol_s);
                }
                let c = corr.sigma_nu[i][k];
                push_mixed(2 * i + 1, 2 * k + 1, &|n| c * coeff[n][i].vol_nu * coeff[n][k].vol_nu);
            }
        }

        if spot_on {
            for (i, p) in params.iter().enumerate() {
                if !p.jump.is_active() {
                    continue;
                }
                let axis = 2 * i;
                let ax = axes[axis];
                let marks = p
                    .jump
                    .marks
                    .iter()
                    .map(|m| {
                        let taps = (0..ax.n).map(|k| ax.locate_extrapolate(ax.node(k) + m.size)).collect();
                        (p.jump.rate * m.prob, taps)
                    })
                    .collect();
                gen.jumps.push(JumpTerm { axis, marks });
            }
        }
        Ok(gen)
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    /// Axes that carry an implicit three-point operator.
    pub fn implicit_axes(&self) -> usize {
        self.ops.len()
    }

    fn axis_index(&self, node: usize, axis: usize) -> usize {
        (node / self.strides[axis]) % self.shape[axis]
    }

    /// `out (+)= A_a u` for the `a`-th implicit axis; `u` holds `m` components per node.
    pub fn apply_axis(&self, a: usize, u: &[f64], m: usize, out: &mut [f64], add: bool) {
        let (_, op) = &self.ops[a];
        let s = op.stride * m;
        for node in 0..self.nodes {
            let base = node * m;
            let k = (node / op.stride) % op.n;
            let (l, dg, up) = (op.lower[node], op.diag[node], op.upper[node]);
            let o = &mut out[base..base + m];
            if !add {
                o.iter_mut().for_each(|x| *x = 0.0);
            }
            let cur = &u[base..base + m];
            for c in 0..m {
                o[c] += dg * cur[c];
            }
            if k > 0 && l != 0.0 {
                let prev = &u[base - s..base - s + m];
                for c in 0..m {
                    o[c] += l * prev[c];
                }
            }
            if k + 1 < op.n && up != 0.0 {
                let next = &u[base + s..base + s + m];
                for c in 0..m {
                    o[c] += up * next[c];
                }
            }
        }
    }

    /// Solve `(I − f·A_a) y = rhs` in place along every line of axis `a`.
    pub fn solve_axis(&self, a: usize, f: f64, rhs: &mut [f64], m: usize, scratch: &mut AxisScratch) {
        let (_, op) = &self.ops[a];
        let n = op.n;
        let stride = op.stride;
        let outer = self.nodes / (n * stride);
        scratch.lower.resize(n, 0.0);
        scratch.diag.resize(n, 0.0);
        scratch.upper.resize(n, 0.0);
        scratch.line.resize(n * m, 0.0);
        for o in 0..outer {
            for inner in 0..stride {
                let base = o * n * stride + inner;
                for k in 0..n {
                    let node = base + k * stride;
                    scratch.lower[k] = -f * op.lower[node];
                    scratch.diag[k] = 1.0 - f * op.diag[node];
                    scratch.upper[k] = -f * op.upper[node];
                    scratch.line[k * m..(k + 1) * m].copy_from_slice(&rhs[node * m..(node + 1) * m]);
                }
                solve_tridiagonal_multi(
                    &scratch.lower,
                    &scratch.diag,
                    &scratch.upper,
                    &mut scratch.line,
                    m,
                    &mut scratch.work,
                );
                for k in 0..n {
                    let node = base + k * stride;
                    rhs[node * m..(node + 1) * m].copy_from_slice(&scratch.line[k * m..(k + 1) * m]);
                }
            }
        }
    }

    /// `out (+)= A_0 u`: mixed derivatives and jumps.
    pub fn apply_explicit(&self, u: &[f64], m: usize, out: &mut [f64], add: bool) {
        if !add {
            out.iter_mut().for_each(|x| *x = 0.0);
        }
        for term in &self.mixed {
            let fx = &self.first[term.ax];
            let fy = &self.first[term.ay];
            for node in 0..self.nodes {
                let c = term.coef[node];
                if c == 0.0 {
                    continue;
                }
                let i = self.axis_index(node, term.ax);
                let j = self.axis_index(node, term.ay);
                let w = c * fx.scale[i] * fy.scale[j];
                let n0 = node as isize;
                let pp = ((n0 + fx.plus[i] + fy.plus[j]) as usize) * m;
                let pm = ((n0 + fx.plus[i] + fy.minus[j]) as usize) * m;
                let mp = ((n0 + fx.minus[i] + fy.plus[j]) as usize) * m;
                let mm = ((n0 + fx.minus[i] + fy.minus[j]) as usize) * m;
                let o = &mut out[node * m..(node + 1) * m];
                for c in 0..m {
                    o[c] += w * (u[pp + c] - u[pm + c] - u[mp + c] + u[mm + c]);
                }
            }
        }
        for term in &self.jumps {
            let stride = self.strides[term.axis];
            for node in 0..self.nodes {
                let k = self.axis_index(node, term.axis);
                let o = &mut out[node * m..(node + 1) * m];
                for (rate, taps) in &term.marks {
                    let (kk, w) = taps[k];
                    let lo = (node + kk * stride - k * stride) * m;
                    let hi = lo + stride * m;
                    for c in 0..m {
                        let shifted = (1.0 - w) * u[lo + c] + w * u[hi + c];
                        o[c] += rate * (shifted - u[node * m + c]);
                    }
                }
            }
        }
    }

    /// `out = L̄ u`.
    pub fn apply(&self, u: &[f64], m: usize, out: &mut [f64]) {
        self.apply_explicit(u, m, out, false);
        for a in 0..self.ops.len() {
            self.apply_axis(a, u, m, out, true);
        }
    }
}

/// Reusable buffers for [`Generator::solve_axis`].
#[derive(Debug, Default, Clone)]
pub struct AxisScratch {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    line: Vec<f64>,
    work: Vec<f64>,
}

/// Apply the full ℙ-generator to one scalar field on the grid.
pub fn apply_generator(
    grid: &SpatialGrid,
    params: &[HestonJumpParams],
    corr: &CorrelationStructure,
    field: &[f64],
) -> Result<Vec<f64>> {
    if field.len() != grid.len() {
        return Err(Error::invalid(format!(
            "field has {} values for {} nodes",
            field.len(),
            grid.len()
        )));
    }
    let gen = Generator::new(grid, params, corr, GeneratorMode::Full)?;
    let mut out = vec![0.0; field.len()];
    gen.apply(field, 1, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{JumpMark, JumpSpec};
    use crate::theta::grid::Axis;

    fn grid(ns: usize, nn: usize) -> SpatialGrid {
        SpatialGrid::new(
            vec![Axis::new(80.0, 120.0, ns).unwrap()],
            vec![Axis::new(0.01, 0.09, nn).unwrap()],
            0.004,
            10,
        )
        .unwrap()
    }

    fn params(mu: f64) -> HestonJumpParams {
        let mut p = HestonJumpParams::reference();
        p.mu = mu;
        p
    }

    fn interior(g: &SpatialGrid, node: usize) -> bool {
        let idx = g.unravel(node);
        idx.iter().zip(g.shape()).all(|(&i, n)| i > 0 && i + 1 < n)
    }

    #[test]
    fn constant_field_is_annihilated() {
        let g = grid(9, 7);
        let mut p = params(0.3);
        p.jump = JumpSpec {
            rate: 2.0,
            marks: vec![JumpMark { size: -3.0, prob: 0.5 }, JumpMark { size: 2.5, prob: 0.5 }],
            compensated: true,
        };
        let out = apply_generator(&g, &[p], &CorrelationStructure::identity(1), &vec![3.7; g.len()]).unwrap();
        assert!(out.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn linear_field_gives_drift() {
        let g = grid(9, 7);
        let field: Vec<f64> = (0..g.len()).map(|n| g.coords(n).0[0]).collect();
        let out = apply_generator(&g, &[params(0.25)], &CorrelationStructure::identity(1), &field).unwrap();
        for n in 0..g.len() {
            let s = g.coords(n).0[0];
            assert!((out[n] - 0.25 * s).abs() < 1e-9);
        }
    }

    #[test]
    fn quadratic_field_second_order() {
        // L(S²) = 2μS² + νS² holds exactly for central stencils at interior nodes.
        let mu = 0.1;
        let errs: Vec<f64> = [9, 17]
            .iter()
            .map(|&n| {
                let g = grid(n, n);
                let field: Vec<f64> = (0..g.len()).map(|k| g.coords(k).0[0].powi(2)).collect();
                let out = apply_generator(&g, &[params(mu)], &CorrelationStructure::identity(1), &field).unwrap();
                (0..g.len())
                    .filter(|&k| interior(&g, k))
                    .map(|k| {
                        let (s, nu) = g.coords(k);
                        (out[k] - (2.0 * mu + nu[0]) * s[0] * s[0]).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        assert!(errs[0] < 1e-9 && errs[1] < 1e-9, "{errs:?}");
    }

    #[test]
    fn smooth_field_converges_at_second_order() {
        let p = params(0.05);
        let f = |s: f64, nu: f64| (s / 40.0).sin() * (1.0 + nu).ln() + (s * nu / 10.0).cos();
        let exact = |s: f64, nu: f64| {
            let c = p.coefficients(Measure::Physical, 0.0, s, nu);
            let h = 1e-4;
            let fs = (f(s + h, nu) - f(s - h, nu)) / (2.0 * h);
            let fss = (f(s + h, nu) - 2.0 * f(s, nu) + f(s - h, nu)) / (h * h);
            let hn = 1e-5;
            let fn_ = (f(s, nu + hn) - f(s, nu - hn)) / (2.0 * hn);
            let fnn = (f(s, nu + hn) - 2.0 * f(s, nu) + f(s, nu - hn)) / (hn * hn);
            let fsn = (f(s + h, nu + hn) - f(s + h, nu - hn) - f(s - h, nu + hn) + f(s - h, nu - hn))
                / (4.0 * h * hn);
            c.drift_s * fs + c.drift_nu * fn_ + 0.5 * c.vol_s.powi(2) * fss + 0.5 * c.vol_nu.powi(2) * fnn
                + p.rho * c.vol_s * c.vol_nu * fsn
        };
        let err = |n: usize| {
            let g = grid(n, n);
            let field: Vec<f64> = (0..g.len()).map(|k| {
                let (s, nu) = g.coords(k);
                f(s[0], nu[0])
            }).collect();
            let out = apply_generator(&g, &[p.clone()], &CorrelationStructure::identity(1), &field).unwrap();
            // Compare on the node set shared by both meshes, away from the boundary.
            (0..g.len())
                .filter(|&k| {
                    let (s, nu) = g.coords(k);
                    (s[0] - 100.0).abs() < 10.0 + 1e-9 && (nu[0] - 0.05).abs() < 0.02 + 1e-9
                })
                .map(|k| {
                    let (s, nu) = g.coords(k);
                    (out[k] - exact(s[0], nu[0])).abs()
                })
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(9), err(17));
        assert!(e1 / e2 > 3.0, "{e1} {e2}");
    }

    #[test]
    fn implicit_solve_inverts_operator() {
        let g = grid(7, 5);
        let gen = Generator::new(&g, &[params(0.2)], &CorrelationStructure::identity(1), GeneratorMode::Full).unwrap();
        let m = 2;
        let x: Vec<f64> = (0..g.len() * m).map(|i| (i as f64 * 0.37).sin()).collect();
        let f = 0.01;
        for a in 0..gen.implicit_axes() {
            let mut ax = vec![0.0; x.len()];
            gen.apply_axis(a, &x, m, &mut ax, false);
            let mut rhs: Vec<f64> = x.iter().zip(&ax).map(|(xi, ai)| xi - f * ai).collect();
            gen.solve_axis(a, f, &mut rhs, m, &mut AxisScratch::default());
            for (r, e) in rhs.iter().zip(&x) {
                assert!((r - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jump_term_is_exact_finite_sum() {
        let g = grid(41, 3);
        let mut p = params(0.0);
        p.xi = 0.0;
        p.kappa_p = 1e-12;
        p.jump = JumpSpec {
            rate: 3.0,
            marks: vec![JumpMark { size: 2.0, prob: 1.0 }],
            compensated: false,
        };
        let field: Vec<f64> = (0..g.len()).map(|k| g.coords(k).0[0]).collect();
        let out = apply_generator(&g, &[p], &CorrelationStructure::identity(1), &field).unwrap();
        // Linear field: jump contribution is rate·size everywhere (extrapolated at the top).
        for v in out {
            assert!((v - 6.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn modes_drop_terms() {
        let g = grid(7, 5);
        let corr = CorrelationStructure::identity(1);
        let field: Vec<f64> = (0..g.len()).map(|k| g.coords(k).0[0]).collect();
        let gen = Generator::new(&g, &[params(0.2)], &corr, GeneratorMode::FrozenSpot).unwrap();
        let mut out = vec![0.0; g.len()];
        gen.apply(&field, 1, &mut out);
        assert!(out.iter().all(|v| v.abs() < 1e-12));
        let gen = Generator::new(&g, &[params(0.2)], &corr, GeneratorMode::Off).unwrap();
        assert_eq!(gen.implicit_axes(), 0);
    }
}
