//! Euler paths of the Heston-with-jumps dynamics under ℙ.

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::linalg::cholesky_psd;
use crate::market::{CorrelationStructure, HestonJumpParams, Measure};
use crate::{Error, Result};

/// Spot and variance per underlying at every time node.
///
/// `s[n * d + i]`; the stored variance is the raw Euler state and may dip
/// below zero, consumers use its positive part.
#[derive(Debug, Clone, PartialEq)]
pub struct UnderlyingPath {
    pub d: usize,
    pub times: Vec<f64>,
    pub s: Vec<f64>,
    pub nu: Vec<f64>,
    /// Number of spot jumps per underlying over the path.
    pub jumps: Vec<usize>,
}

impl UnderlyingPath {
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn spot(&self, n: usize) -> &[f64] {
        &self.s[n * self.d..(n + 1) * self.d]
    }

    pub fn var(&self, n: usize) -> &[f64] {
        &self.nu[n * self.d..(n + 1) * self.d]
    }
}

/// Full-truncation Euler scheme with correlated Gaussian shocks and
/// compound Poisson spot jumps.
pub fn simulate_underlying<R: Rng + ?Sized>(
    params: &[HestonJumpParams],
    corr: &CorrelationStructure,
    horizon: f64,
    steps: usize,
    rng: &mut R,
) -> Result<UnderlyingPath> {
    let d = params.len();
    if corr.dim() != d || d == 0 {
        return Err(Error::invalid("simulation: correlation dimension differs from the parameter sets"));
    }
    if !(horizon > 0.0) || steps == 0 {
        return Err(Error::invalid("simulation: horizon and step count must be positive"));
    }
    let rhos: Vec<f64> = params.iter().map(|p| p.rho).collect();
    let chol = cholesky_psd(&corr.joint(&rhos));
    let poisson = params
        .iter()
        .map(|p| {
            if p.jump.is_active() {
                Poisson::new(p.jump.rate * horizon / steps as f64)
                    .map(Some)
                    .map_err(|e| Error::invalid(format!("jump rate: {e}")))
            } else {
                Ok(None)
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let dt = horizon / steps as f64;
    let sq_dt = dt.sqrt();
    let mut path = UnderlyingPath {
        d,
        times: (0..=steps).map(|n| n as f64 * dt).collect(),
        s: Vec::with_capacity((steps + 1) * d),
        nu: Vec::with_capacity((steps + 1) * d),
        jumps: vec![0; d],
    };
    let mut s: Vec<f64> = params.iter().map(|p| p.s0).collect();
    let mut nu: Vec<f64> = params.iter().map(|p| p.nu0).collect();
    path.s.extend_from_slice(&s);
    path.nu.extend_from_slice(&nu);
    let mut z = vec![0.0; 2 * d];
    let mut w = vec![0.0; 2 * d];
    for n in 0..steps {
        let t = n as f64 * dt;
        for x in z.iter_mut() {
            *x = StandardNormal.sample(rng);
        }
        for (r, out) in w.iter_mut().enumerate() {
            *out = (0..=r).map(|c| chol[r][c] * z[c]).sum();
        }
        for i in 0..d {
            let p = &params[i];
            let c = p.coefficients(Measure::Physical, t, s[i], nu[i]);
            let mut jump = 0.0;
            if let Some(dist) = &poisson[i] {
                let count = dist.sample(rng) as usize;
                path.jumps[i] += count;
                for _ in 0..count {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut size = p.jump.marks.last().map_or(0.0, |m| m.size);
                    for m in &p.jump.marks {
                        acc += m.prob;
                        if u < acc {
                            size = m.size;
                            break;
                        }
                    }
                    jump += size;
                }
            }
            s[i] += c.drift_s * dt + c.vol_s * sq_dt * w[i] + jump;
            nu[i] += c.drift_nu * dt + c.vol_nu * sq_dt * w[d + i];
        }
        path.s.extend_from_slice(&s);
        path.nu.extend_from_slice(&nu);
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{JumpMark, JumpSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_vol_of_vol_at_long_run_mean_keeps_variance() {
        let mut p = HestonJumpParams::reference();
        p.xi = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let path = simulate_underlying(&[p], &CorrelationStructure::identity(1), 0.004, 50, &mut rng).unwrap();
        assert!(path.nu.iter().all(|&v| v == 0.04));
    }

    #[test]
    fn zero_vol_of_vol_relaxes_exponentially() {
        let mut p = HestonJumpParams::reference();
        p.xi = 0.0;
        p.nu0 = 0.09;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let steps = 4000;
        let path = simulate_underlying(&[p], &CorrelationStructure::identity(1), 1.0, steps, &mut rng).unwrap();
        let exact = 0.04 + 0.05 * (-2.0f64).exp();
        assert!((path.nu[steps] - exact).abs() < 1e-4);
    }

    #[test]
    fn jump_counts_follow_poisson_mean() {
        let mut p = HestonJumpParams::reference();
        p.jump = JumpSpec {
            rate: 500.0,
            marks: vec![JumpMark { size: -1.0, prob: 0.5 }, JumpMark { size: 1.0, prob: 0.5 }],
            compensated: true,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let trials = 400;
        let mut total = 0usize;
        for _ in 0..trials {
            let path = simulate_underlying(&[p.clone()], &CorrelationStructure::identity(1), 0.01, 20, &mut rng).unwrap();
            total += path.jumps[0];
        }
        let mean = total as f64 / trials as f64;
        let se = (5.0f64 / trials as f64).sqrt();
        assert!((mean - 5.0).abs() < 3.0 * se, "{mean}");
    }
}
