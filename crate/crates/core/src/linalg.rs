//! Small dense and banded linear algebra helpers.

use nalgebra::DMatrix;

fn to_dmatrix(m: &[Vec<f64>]) -> DMatrix<f64> {
    let n = m.len();
    DMatrix::from_fn(n, n, |i, k| m[i][k])
}

/// Smallest eigenvalue of a symmetric matrix (symmetrized first).
pub fn min_eigenvalue(m: &[Vec<f64>]) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let a = to_dmatrix(m);
    let sym = (&a + a.transpose()) * 0.5;
    sym.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Lower Cholesky factor of a PSD matrix.
///
/// Semidefinite directions get a zero column instead of failing, so a
/// correlation matrix with `|ρ| = 1` entries still yields a factor.
pub fn cholesky_psd(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = m.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..=i {
            let s: f64 = (0..k).map(|c| l[i][c] * l[k][c]).sum();
            if i == k {
                let v = m[i][i] - s;
                l[i][i] = if v > 1e-14 { v.sqrt() } else { 0.0 };
            } else if l[k][k] > 0.0 {
                l[i][k] = (m[i][k] - s) / l[k][k];
            }
        }
    }
    l
}

/// Solve a tridiagonal system with `m` right-hand sides stored row-major
/// (`rhs[row * m + c]`), in place. `lower[0]` and `upper[n-1]` are ignored.
pub fn solve_tridiagonal_multi(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &mut [f64],
    m: usize,
    scratch: &mut Vec<f64>,
) {
    let n = diag.len();
    scratch.clear();
    scratch.resize(n, 0.0);
    let cp = scratch;
    let mut denom = diag[0];
    cp[0] = upper[0] / denom;
    for c in 0..m {
        rhs[c] /= denom;
    }
    for i in 1..n {
        denom = diag[i] - lower[i] * cp[i - 1];
        if i < n - 1 {
            cp[i] = upper[i] / denom;
        }
        let (prev, cur) = rhs.split_at_mut(i * m);
        let prev = &prev[(i - 1) * m..];
        let cur = &mut cur[..m];
        let lo = lower[i];
        for c in 0..m {
            cur[c] = (cur[c] - lo * prev[c]) / denom;
        }
    }
    for i in (0..n - 1).rev() {
        let (cur, next) = rhs.split_at_mut((i + 1) * m);
        let cur = &mut cur[i * m..];
        let f = cp[i];
        for c in 0..m {
            cur[c] -= f * next[c];
        }
    }
}
