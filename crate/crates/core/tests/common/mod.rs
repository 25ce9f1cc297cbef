//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use num_complex::Complex64;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use vegabook_core::book::BookRules;
use vegabook_core::hamiltonian::optimal_quote;
use vegabook_core::market::Measure;
use vegabook_core::*;

pub fn reference() -> HestonJumpParams {
    HestonJumpParams::reference()
}

pub fn reference_book() -> BookSpec {
    BookRules::default().build(&reference()).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

// ---------------------------------------------------------------------------
// Hamiltonian by direct maximization

fn spread_revenue(lambda: f64, alpha: f64, beta: f64, vega: f64, p: f64, d: f64) -> f64 {
    lambda / (1.0 + (alpha + beta * d / vega).exp()) * (d - p)
}

/// `sup_δ Λ(δ)(δ − p)` by a coarse scan, a `1e−4` scan around the best
/// coarse point, then three parabolic refinements. Returns `(H, δ*)`.
pub fn brute_force_quote(params: &IntensityParams, vega: f64, p: f64) -> (f64, f64) {
    let (l, a, b) = (params.lambda_max, params.alpha, params.beta);
    let s = vega / b;
    let f = |d: f64| spread_revenue(l, a, b, vega, p, d);
    let scan = |lo: f64, step: f64, n: usize| {
        (0..=n)
            .map(|k| lo + step * k as f64)
            .map(|d| (d, f(d)))
            .fold((lo, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc })
    };
    let (coarse, _) = scan(p, 1e-2 * s, 6000);
    let (mut d, _) = scan(coarse - 1e-2 * s, 1e-4 * s, 200);
    for h in [1e-3 * s, 1e-4 * s, 1e-5 * s] {
        let (fm, f0, fp) = (f(d - h), f(d), f(d + h));
        let curv = fm - 2.0 * f0 + fp;
        if curv < 0.0 {
            d += 0.5 * h * (fm - fp) / curv;
        }
    }
    (f(d), d)
}

/// `H″(0)` by a central second difference of the library Hamiltonian value.
pub fn h_second_fd(params: &IntensityParams, vega: f64) -> f64 {
    let h = 1e-3 * vega / params.beta;
    let v = |p: f64| optimal_quote(params, vega, p).unwrap().value;
    (v(h) - 2.0 * v(0.0) + v(-h)) / (h * h)
}

// ---------------------------------------------------------------------------
// Greeks by finite differences of the price

pub fn fd_greeks(pricer: &HestonPricer, s: f64, nu: f64, strike: f64, maturity: f64) -> GreeksBundle {
    let c = |s: f64, nu: f64| pricer.call_price(0.0, s, nu, strike, maturity).unwrap();
    let hs = 0.02;
    let hn = 2e-3 * nu;
    let c0 = c(s, nu);
    let d_s = (c(s + hs, nu) - c(s - hs, nu)) / (2.0 * hs);
    let (cp, cm) = (c(s, nu + hn), c(s, nu - hn));
    let d_nu = (cp - cm) / (2.0 * hn);
    let d_nunu = (cp - 2.0 * c0 + cm) / (hn * hn);
    let d_snu = (c(s + hs, nu + hn) - c(s + hs, nu - hn) - c(s - hs, nu + hn) + c(s - hs, nu - hn)) / (4.0 * hs * hn);
    let sq = nu.sqrt();
    GreeksBundle {
        price: c0,
        delta: d_s,
        vega: 2.0 * sq * d_nu,
        vanna: 2.0 * sq * d_snu,
        vomma: 4.0 * nu * d_nunu,
    }
}

/// Heston call by the Lewis formula, trapezoid rule on `[0, 400]`,
/// characteristic function in the rotation-safe form.
pub fn heston_call_trapezoid(params: &HestonJumpParams, s: f64, nu: f64, strike: f64, tau: f64) -> f64 {
    let (kappa, theta, xi, rho) = (params.kappa_q, params.theta_q, params.xi, params.rho);
    let i = Complex64::i();
    let cf = |u: Complex64| {
        let b = kappa - rho * xi * i * u;
        let d = (b * b + xi * xi * (i * u + u * u)).sqrt();
        let g = (b - d) / (b + d);
        let e = (-d * tau).exp();
        let c = kappa * theta / (xi * xi) * ((b - d) * tau - 2.0 * ((1.0 - g * e) / (1.0 - g)).ln());
        let dd = (b - d) / (xi * xi) * (1.0 - e) / (1.0 - g * e);
        (c + dd * nu).exp()
    };
    let k = (s / strike).ln();
    let n = 400_000;
    let h = 400.0 / n as f64;
    let f = |u: f64| (Complex64::new(0.0, u * k).exp() * cf(Complex64::new(u, -0.5))).re / (u * u + 0.25);
    let mut acc = 0.5 * (f(0.0) + f(400.0));
    for j in 1..n {
        acc += f(h * j as f64);
    }
    s - (s * strike).sqrt() / std::f64::consts::PI * acc * h
}

// ---------------------------------------------------------------------------
// Black–Scholes closed forms, used for the ξ = 0 limit

pub struct Bs {
    pub s: f64,
    pub k: f64,
    pub tau: f64,
    pub sigma: f64,
}

impl Bs {
    fn d1(&self) -> f64 {
        ((self.s / self.k).ln() + 0.5 * self.sigma * self.sigma * self.tau) / (self.sigma * self.tau.sqrt())
    }

    fn d2(&self) -> f64 {
        self.d1() - self.sigma * self.tau.sqrt()
    }

    pub fn price(&self) -> f64 {
        let n = Normal::standard();
        self.s * n.cdf(self.d1()) - self.k * n.cdf(self.d2())
    }

    pub fn delta(&self) -> f64 {
        Normal::standard().cdf(self.d1())
    }

    /// `∂C/∂σ`.
    pub fn vega(&self) -> f64 {
        self.s * Normal::standard().pdf(self.d1()) * self.tau.sqrt()
    }

    /// `∂²C/∂S∂σ`.
    pub fn vanna(&self) -> f64 {
        -Normal::standard().pdf(self.d1()) * self.d2() / self.sigma
    }

    /// `∂²C/∂σ²`.
    pub fn volga(&self) -> f64 {
        self.vega() * self.d1() * self.d2() / self.sigma
    }
}

/// Heston Greeks with `ξ = 0`: Black–Scholes at the integrated variance,
/// mapped to the `√ν` convention.
pub fn heston_zero_volvol(params: &HestonJumpParams, s: f64, nu: f64, strike: f64, tau: f64) -> GreeksBundle {
    let k = params.kappa_q;
    let b = (1.0 - (-k * tau).exp()) / k;
    let total = params.theta_q * (tau - b) + nu * b;
    let sigma = (total / tau).sqrt();
    let bs = Bs { s, k: strike, tau, sigma };
    // σ(ν) with dσ/dν = b/(2στ) and d²σ/dν² = −(dσ/dν)²/σ.
    let s1 = b / (2.0 * sigma * tau);
    let s2 = -s1 * s1 / sigma;
    let d_nu = bs.vega() * s1;
    let d_nunu = bs.volga() * s1 * s1 + bs.vega() * s2;
    let d_snu = bs.vanna() * s1;
    let sq = nu.sqrt();
    GreeksBundle {
        price: bs.price(),
        delta: bs.delta(),
        vega: 2.0 * sq * d_nu,
        vanna: 2.0 * sq * d_snu,
        vomma: 4.0 * nu * d_nunu,
    }
}

// ---------------------------------------------------------------------------
// Scalar Riccati `dy/dτ = P − a y²`, `y(0) = 0`

pub fn rk4_riccati(p: f64, a: f64, tau: f64, steps: usize) -> f64 {
    let f = |y: f64| p - a * y * y;
    let h = tau / steps as f64;
    let mut y = 0.0;
    for _ in 0..steps {
        let k1 = f(y);
        let k2 = f(y + 0.5 * h * k1);
        let k3 = f(y + 0.5 * h * k2);
        let k4 = f(y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    y
}

pub fn riccati_closed_form(p: f64, a: f64, tau: f64) -> f64 {
    (p / a).sqrt() * ((p * a).sqrt() * tau).tanh()
}

// ---------------------------------------------------------------------------
// Direct HJB on (t, ν, q) for one option with the spot held at S₀

pub struct FullHjb {
    pub nu: Vec<f64>,
    /// Inventory levels `−Q z … Q z`.
    pub q: Vec<f64>,
    /// `u[k * n_q + m]` at `t = 0`.
    pub u0: Vec<f64>,
    pub vega0: Vec<f64>,
}

pub struct FullHjbSetup<'a> {
    pub params: &'a HestonJumpParams,
    pub option: OptionSpec,
    pub z: f64,
    pub intensity: QuotePair,
    pub gamma: f64,
    pub horizon: f64,
    pub nu_lo: f64,
    pub nu_hi: f64,
    pub nu_nodes: usize,
    pub q_levels: usize,
    pub steps: usize,
}

fn thomas(a: &[f64], b: &[f64], c: &[f64], d: &mut [f64]) {
    let n = d.len();
    let mut cp = vec![0.0; n];
    let mut beta = b[0];
    d[0] /= beta;
    for i in 1..n {
        cp[i - 1] = c[i - 1] / beta;
        beta = b[i] - a[i] * cp[i - 1];
        d[i] = (d[i] - a[i] * d[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        d[i] -= cp[i] * d[i + 1];
    }
}

impl FullHjbSetup<'_> {
    /// Lie splitting: explicit Euler for the inventory terms, implicit
    /// Euler for the variance diffusion.
    pub fn solve(&self) -> FullHjb {
        let p = self.params;
        let pricer = HestonPricer::new(p);
        let nk = self.nu_nodes;
        let h = (self.nu_hi - self.nu_lo) / (nk - 1) as f64;
        let nu: Vec<f64> = (0..nk).map(|k| self.nu_lo + h * k as f64).collect();
        let qn = 2 * self.q_levels + 1;
        let q: Vec<f64> = (0..qn).map(|m| (m as f64 - self.q_levels as f64) * self.z).collect();
        let dt = self.horizon / self.steps as f64;
        let greeks_at = |t: f64| -> Vec<GreeksBundle> {
            nu.iter()
                .map(|&v| {
                    pricer
                        .greeks(t, p.s0, v, self.option.strike, self.option.maturity)
                        .unwrap()
                })
                .collect()
        };

        // Implicit operator rows (constant in time).
        let (mut lo, mut di, mut up) = (vec![0.0; nk], vec![0.0; nk], vec![0.0; nk]);
        for k in 0..nk {
            let c = p.coefficients(Measure::Physical, 0.0, p.s0, nu[k]);
            let diff = 0.5 * c.vol_nu * c.vol_nu / (h * h);
            let (mut l, mut d, mut u) = (0.0, 0.0, 0.0);
            if k == 0 {
                let a = c.drift_nu.max(0.0) / h;
                d -= a;
                u += a;
            } else if k == nk - 1 {
                let a = (-c.drift_nu).max(0.0) / h;
                d -= a;
                l += a;
            } else {
                l += diff - c.drift_nu / (2.0 * h);
                u += diff + c.drift_nu / (2.0 * h);
                d -= 2.0 * diff;
            }
            lo[k] = -dt * l;
            di[k] = 1.0 - dt * d;
            up[k] = -dt * u;
        }

        let mut u = vec![0.0; nk * qn];
        let mut col = vec![0.0; nk];
        for step in (0..self.steps).rev() {
            let t = step as f64 * dt;
            let gk = greeks_at(t + dt);
            let mut next = u.clone();
            for k in 0..nk {
                let g = &gk[k];
                let cp = p.coefficients(Measure::Physical, t, p.s0, nu[k]);
                let cq = p.coefficients(Measure::RiskNeutral, t, p.s0, nu[k]);
                let sq = nu[k].sqrt();
                let gsrc = g.vega * (cp.drift_nu - cq.drift_nu) / (2.0 * sq)
                    + p.rho * g.vanna * (cp.vol_nu - cq.vol_nu) / (2.0 * sq) * cp.vol_s
                    + g.vomma * (cp.vol_nu * cp.vol_nu - cq.vol_nu * cq.vol_nu) / (4.0 * nu[k]);
                let r = cp.vol_nu / (2.0 * sq) * g.vega;
                let row = &u[k * qn..(k + 1) * qn];
                for m in 0..qn {
                    let mut rhs = q[m] * gsrc - 0.5 * self.gamma * (r * q[m]).powi(2);
                    if m + 1 < qn {
                        let pb = (row[m] - row[m + 1]) / self.z;
                        rhs += self.z * optimal_quote(&self.intensity.bid, g.vega, pb).unwrap().value;
                    }
                    if m > 0 {
                        let pa = (row[m] - row[m - 1]) / self.z;
                        rhs += self.z * optimal_quote(&self.intensity.ask, g.vega, pa).unwrap().value;
                    }
                    next[k * qn + m] += dt * rhs;
                }
            }
            for m in 0..qn {
                for k in 0..nk {
                    col[k] = next[k * qn + m];
                }
                thomas(&lo, &di, &up, &mut col);
                for k in 0..nk {
                    u[k * qn + m] = col[k];
                }
            }
        }
        let vega0 = greeks_at(0.0).iter().map(|g| g.vega).collect();
        FullHjb { nu, q, u0: u, vega0 }
    }
}

impl FullHjb {
    /// Optimal quote at `t = 0`, variance node `k`, inventory level `m`.
    pub fn quote(&self, intensity: &QuotePair, z: f64, k: usize, m: usize, side: Side) -> f64 {
        let qn = self.q.len();
        let row = &self.u0[k * qn..(k + 1) * qn];
        let p = match side {
            Side::Bid => (row[m] - row[m + 1]) / z,
            Side::Ask => (row[m] - row[m - 1]) / z,
        };
        optimal_quote(intensity.side(side), self.vega0[k], p).unwrap().argmax
    }
}
