//! Tensor-product spatial grid over `(S_i, ν_i)` for every underlying.

use serde::{Deserialize, Serialize};

use crate::market::HestonJumpParams;
use crate::{Error, Result};

/// Uniform axis `lo + k·h`, `k = 0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::invalid(format!("axis needs at least 3 nodes, got {n}")));
        }
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid(format!("axis bounds [{lo}, {hi}] are not increasing")));
        }
        Ok(Self { lo, hi, n })
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        if k == self.n - 1 {
            self.hi
        } else {
            self.lo + k as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.node(k)).collect()
    }

    pub fn contains_strictly(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }

    /// Cell index `k ∈ [0, n−2]` and weight `w` with `x ≈ (1−w)x_k + w x_{k+1}`,
    /// after clamping `x` to the axis.
    pub fn locate(&self, x: f64) -> (usize, f64, bool) {
        let clamped = x.clamp(self.lo, self.hi);
        let pos = (clamped - self.lo) / self.step();
        let k = (pos.floor() as usize).min(self.n - 2);
        (k, pos - k as f64, clamped != x)
    }

    /// Like [`Axis::locate`] but extrapolates linearly outside the axis.
    pub fn locate_extrapolate(&self, x: f64) -> (usize, f64) {
        let pos = (x - self.lo) / self.step();
        let k = pos.floor().clamp(0.0, (self.n - 2) as f64) as usize;
        (k, pos - k as f64)
    }
}

/// Spot and variance axes per underlying plus a uniform time grid on `[0, T]`.
///
/// Flat node ordering is row-major over the axis list
/// `[S_0, ν_0, S_1, ν_1, …]` with the last axis fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    pub s_axes: Vec<Axis>,
    pub nu_axes: Vec<Axis>,
    pub horizon: f64,
    pub steps: usize,
}

impl SpatialGrid {
    pub fn new(s_axes: Vec<Axis>, nu_axes: Vec<Axis>, horizon: f64, steps: usize) -> Result<Self> {
        if s_axes.is_empty() || s_axes.len() != nu_axes.len() {
            return Err(Error::invalid("need one spot and one variance axis per underlying"));
        }
        if nu_axes.iter().any(|a| a.lo <= 0.0) {
            return Err(Error::invalid("variance nodes must be strictly positive"));
        }
        if !(horizon > 0.0) || steps == 0 {
            return Err(Error::invalid("horizon and step count must be positive"));
        }
        Ok(Self {
            s_axes,
            nu_axes,
            horizon,
            steps,
        })
    }

    /// Checks that every `(S₀, ν₀)` lies strictly inside the grid.
    pub fn check_contains(&self, params: &[HestonJumpParams]) -> Result<()> {
        if params.len() != self.d() {
            return Err(Error::invalid(format!(
                "{} parameter sets for {} underlyings",
                params.len(),
                self.d()
            )));
        }
        for (i, p) in params.iter().enumerate() {
            if !self.s_axes[i].contains_strictly(p.s0) || !self.nu_axes[i].contains_strictly(p.nu0) {
                return Err(Error::invalid(format!(
                    "underlying {i}: (S0, nu0) = ({}, {}) is not strictly inside the grid",
                    p.s0, p.nu0
                )));
            }
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.s_axes.len()
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        if n == self.steps {
            self.horizon
        } else {
            n as f64 * self.dt()
        }
    }

    /// Axis list in flat-layout order.
    pub fn axes(&self) -> Vec<Axis> {
        let mut out = Vec::with_capacity(2 * self.d());
        for i in 0..self.d() {
            out.push(self.s_axes[i]);
            out.push(self.nu_axes[i]);
        }
        out
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes().iter().map(|a| a.n).collect()
    }

    pub fn strides(&self) -> Vec<usize> {
        let shape = self.shape();
        let mut strides = vec![1; shape.len()];
        for a in (0..shape.len().saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * shape[a + 1];
        }
        strides
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Multi-index of a flat node.
    pub fn unravel(&self, mut node: usize) -> Vec<usize> {
        let shape = self.shape();
        let mut idx = vec![0; shape.len()];
        for a in (0..shape.len()).rev() {
            idx[a] = node % shape[a];
            node /= shape[a];
        }
        idx
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter().zip(self.strides()).map(|(i, s)| i * s).sum()
    }

    /// `(S, ν)` per underlying at a flat node.
    pub fn coords(&self, node: usize) -> (Vec<f64>, Vec<f64>) {
        let idx = self.unravel(node);
        let s = (0..self.d()).map(|i| self.s_axes[i].node(idx[2 * i])).collect();
        let nu = (0..self.d()).map(|i| self.nu_axes[i].node(idx[2 * i + 1])).collect();
        (s, nu)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> SpatialGrid {
        SpatialGrid::new(
            vec![Axis::new(80.0, 120.0, 5).unwrap()],
            vec![Axis::new(0.01, 0.09, 3).unwrap()],
            0.004,
            10,
        )
        .unwrap()
    }

    #[test]
    fn ravel_round_trip() {
        let g = grid();
        assert_eq!(g.len(), 15);
        assert_eq!(g.strides(), vec![3, 1]);
        for n in 0..g.len() {
            assert_eq!(g.ravel(&g.unravel(n)), n);
        }
        let (s, nu) = g.coords(7);
        assert_eq!((s[0], nu[0]), (100.0, 0.05));
    }

    #[test]
    fn rejects_bad_axes() {
        assert!(Axis::new(0.0, 1.0, 2).is_err());
        assert!(Axis::new(1.0, 1.0, 5).is_err());
        let a = Axis::new(-0.1, 0.1, 5).unwrap();
        assert!(SpatialGrid::new(vec![a], vec![a], 1.0, 1).is_err());
    }

    #[test]
    fn locate_and_contains() {
        let a = Axis::new(0.0, 4.0, 5).unwrap();
        assert_eq!(a.locate(2.5), (2, 0.5, false));
        assert_eq!(a.locate(4.0), (3, 1.0, false));
        assert_eq!(a.locate(9.0), (3, 1.0, true));
        assert_eq!(a.locate_extrapolate(5.0), (3, 2.0));
        assert_eq!(a.locate_extrapolate(-1.0), (0, -1.0));
        let g = grid();
        assert!(g.check_contains(&[HestonJumpParams::reference()]).is_ok());
    }
}
