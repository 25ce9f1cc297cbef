//! European call prices and Greeks under risk-neutral Heston dynamics.
//!
//! Prices use the single-integral (Lewis) representation with zero rates
//! and dividends,
//!
//! ```text
//! C = S − √(SK)/π ∫₀^∞ Re[e^{iuk} φ(u − i/2)] / (u² + 1/4) du,   k = ln(S/K),
//! ```
//!
//! where `φ` is the characteristic function of `ln(S_T/S_t)`. Writing
//! `ln φ = C(u, τ) + D(u, τ) ν`, the variance derivatives follow from
//! `∂_ν φ = D φ`, so every Greek is a weighted sum over the same quadrature
//! nodes. A [`CfSlice`] caches those per-node values for one `(τ, ν)` so a
//! whole strike ladder can be evaluated cheaply.
//!
//! Greeks are reported in the `√ν` convention: `vega = 2√ν ∂_ν O`,
//! `vanna = 2√ν ∂²_{Sν} O`, `vomma = 4ν ∂²_{νν} O`.

use std::collections::HashMap;
use std::f64::consts::{FRAC_1_PI, PI};
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use serde::Serialize;
use statrs::function::erf::erfc;

use crate::market::HestonJumpParams;
use crate::quadrature::gauss_legendre_unit;
use crate::{Error, Result};

const BASE_NODES: usize = 128;
const MAX_NODES: usize = 4096;
const REFINE_TOL: f64 = 1e-8;
/// Log-moneyness offsets at which the node count is checked.
const PROBE_MONEYNESS: [f64; 5] = [-0.5, -0.25, 0.0, 0.25, 0.5];
/// Cache bands per unit of `ln τ`.
const RULE_BANDS: f64 = 32.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct GreeksBundle {
    pub price: f64,
    pub delta: f64,
    pub vega: f64,
    pub vanna: f64,
    pub vomma: f64,
}

#[derive(Debug)]
struct Rule {
    u: Vec<f64>,
    /// Quadrature weight times Jacobian, `1/(u² + 1/4)` and `1/π`.
    w: Vec<f64>,
}

impl Rule {
    fn new(n: usize, scale: f64) -> Self {
        let (x, wx) = gauss_legendre_unit(n);
        let mut u = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        for (xi, wi) in x.into_iter().zip(wx) {
            let one_m = 1.0 - xi;
            let ui = scale * xi / one_m;
            let jac = scale / (one_m * one_m);
            u.push(ui);
            w.push(wi * jac / (ui * ui + 0.25) * FRAC_1_PI);
        }
        Self { u, w }
    }
}

/// Risk-neutral Heston pricer with a per-maturity quadrature cache.
#[derive(Debug)]
pub struct HestonPricer {
    kappa: f64,
    theta: f64,
    xi: f64,
    rho: f64,
    v_ref: f64,
    jump_rate: f64,
    rules: Mutex<HashMap<i64, Arc<Rule>>>,
}

impl Clone for HestonPricer {
    fn clone(&self) -> Self {
        Self {
            kappa: self.kappa,
            theta: self.theta,
            xi: self.xi,
            rho: self.rho,
            v_ref: self.v_ref,
            jump_rate: self.jump_rate,
            rules: Mutex::new(self.rules.lock().expect("rule cache").clone()),
        }
    }
}

impl HestonPricer {
    pub fn new(params: &HestonJumpParams) -> Self {
        Self {
            kappa: params.kappa_q,
            theta: params.theta_q,
            xi: params.xi,
            rho: params.rho,
            v_ref: params.nu0.max(params.theta_q).max(1e-4),
            jump_rate: if params.jump.is_active() { params.jump.rate } else { 0.0 },
            rules: Mutex::new(HashMap::new()),
        }
    }

    fn check(&self, tau: f64) -> Result<()> {
        if self.jump_rate > 0.0 {
            return Err(Error::domain("semi-analytic pricing does not support jumps"));
        }
        if !(tau > 0.0) {
            return Err(Error::domain(format!("time to maturity {tau} must be > 0")));
        }
        Ok(())
    }

    /// `(C, D)` of `ln φ(u − i/2) = C + D ν` for real `u`.
    fn exponent(&self, u: f64, tau: f64) -> (Complex64, Complex64) {
        // iω + ω² for ω = u − i/2 is real.
        let quad = u * u + 0.25;
        let (kappa, theta, xi) = (self.kappa, self.theta, self.xi);
        if xi == 0.0 {
            let b = if kappa > 0.0 { (1.0 - (-kappa * tau).exp()) / kappa } else { tau };
            let d = -0.5 * quad * b;
            let c = -0.5 * quad * theta * (tau - b);
            return (Complex64::new(c, 0.0), Complex64::new(d, 0.0));
        }
        let xi2 = xi * xi;
        let beta = Complex64::new(kappa - 0.5 * self.rho * xi, -self.rho * xi * u);
        let mut d = (beta * beta + xi2 * quad).sqrt();
        if d.re < 0.0 {
            d = -d;
        }
        let bmd = beta - d;
        let g = bmd / (beta + d);
        let e = (-d * tau).exp();
        let one_m_ge = 1.0 - g * e;
        let dd = bmd / xi2 * (1.0 - e) / one_m_ge;
        let cc = kappa * theta / xi2 * (bmd * tau - 2.0 * (one_m_ge / (1.0 - g)).ln());
        (cc, dd)
    }

    fn slice_with(&self, rule: Arc<Rule>, tau: f64, nu: f64) -> CfSlice {
        let nu = nu.max(0.0);
        let n = rule.u.len();
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        let mut c = Vec::with_capacity(n);
        for (&u, &w) in rule.u.iter().zip(&rule.w) {
            let (cc, dd) = self.exponent(u, tau);
            let phi = (cc + dd * nu).exp() * w;
            let dphi = dd * phi;
            a.push(phi);
            b.push(dphi);
            c.push(dd * dphi);
        }
        CfSlice { nu, rule, a, b, c }
    }

    /// Quadrature rule for maturities within a 3% band around `tau`.
    ///
    /// Rules are shared per band so that a simulation with a fresh maturity
    /// at every step does not grow the cache without bound.
    fn rule_for(&self, tau: f64) -> Arc<Rule> {
        let key = (tau.ln() * RULE_BANDS).round() as i64;
        if let Some(r) = self.rules.lock().expect("rule cache").get(&key) {
            return r.clone();
        }
        let tau_ref = (key as f64 / RULE_BANDS).exp();
        let scale = 1.0 / (self.v_ref * tau_ref).sqrt();
        let probes = [0.125 * self.v_ref, 0.25 * self.v_ref, self.v_ref, 4.0 * self.v_ref];
        let strikes = PROBE_MONEYNESS.map(|m| 100.0 * m.exp());
        let mut n = BASE_NODES;
        let mut coarse = Arc::new(Rule::new(n, scale));
        loop {
            if n >= MAX_NODES {
                break;
            }
            let fine = Arc::new(Rule::new(2 * n, scale));
            let agree = probes.iter().all(|&nu| {
                let c = self.slice_with(coarse.clone(), tau_ref, nu);
                let f = self.slice_with(fine.clone(), tau_ref, nu);
                strikes.iter().all(|&k| (c.price(100.0, k) - f.price(100.0, k)).abs() <= REFINE_TOL)
            });
            if agree {
                break;
            }
            n *= 2;
            coarse = fine;
        }
        self.rules.lock().expect("rule cache").insert(key, coarse.clone());
        coarse
    }

    /// Number of quadrature nodes selected for time to maturity `tau`.
    pub fn nodes_for(&self, tau: f64) -> usize {
        self.rule_for(tau).u.len()
    }

    /// Characteristic-function values for one `(τ, ν)`.
    pub fn slice(&self, tau: f64, nu: f64) -> Result<CfSlice> {
        self.check(tau)?;
        Ok(self.slice_with(self.rule_for(tau), tau, nu))
    }

    pub fn call_price(&self, t: f64, s: f64, nu: f64, strike: f64, maturity: f64) -> Result<f64> {
        let tau = maturity - t;
        self.check(tau)?;
        if strike <= 0.0 {
            return Ok(s);
        }
        Ok(self.slice(tau, nu)?.price(s, strike))
    }

    pub fn greeks(&self, t: f64, s: f64, nu: f64, strike: f64, maturity: f64) -> Result<GreeksBundle> {
        let tau = maturity - t;
        self.check(tau)?;
        if strike <= 0.0 {
            return Ok(GreeksBundle {
                price: s,
                delta: 1.0,
                ..Default::default()
            });
        }
        Ok(self.slice(tau, nu)?.greeks(s, strike))
    }
}

/// Per-node characteristic function values `φ`, `Dφ`, `D²φ` (already
/// multiplied by the quadrature weights) for a fixed `(τ, ν)`.
#[derive(Debug, Clone)]
pub struct CfSlice {
    nu: f64,
    rule: Arc<Rule>,
    a: Vec<Complex64>,
    b: Vec<Complex64>,
    c: Vec<Complex64>,
}

struct Integrals {
    i0: f64,
    ik: f64,
    inu: f64,
    iknu: f64,
    inunu: f64,
}

impl CfSlice {
    fn integrals(&self, k: f64, full: bool) -> Integrals {
        let mut out = Integrals {
            i0: 0.0,
            ik: 0.0,
            inu: 0.0,
            iknu: 0.0,
            inunu: 0.0,
        };
        for (n, &u) in self.rule.u.iter().enumerate() {
            let (sn, cs) = (u * k).sin_cos();
            let e = Complex64::new(cs, sn);
            let ea = e * self.a[n];
            out.i0 += ea.re;
            // Re[i u z] = −u Im z
            out.ik -= u * ea.im;
            if full {
                let eb = e * self.b[n];
                out.inu += eb.re;
                out.iknu -= u * eb.im;
                out.inunu += (e * self.c[n]).re;
            }
        }
        out
    }

    pub fn price(&self, s: f64, strike: f64) -> f64 {
        if strike <= 0.0 {
            return s;
        }
        let k = (s / strike).ln();
        s - (s * strike).sqrt() * self.integrals(k, false).i0
    }

    /// Price and delta only.
    pub fn price_delta(&self, s: f64, strike: f64) -> (f64, f64) {
        if strike <= 0.0 {
            return (s, 1.0);
        }
        let k = (s / strike).ln();
        let it = self.integrals(k, false);
        let price = s - (s * strike).sqrt() * it.i0;
        let delta = 1.0 - (strike / s).sqrt() * (0.5 * it.i0 + it.ik);
        (price, delta)
    }

    pub fn greeks(&self, s: f64, strike: f64) -> GreeksBundle {
        if strike <= 0.0 {
            return GreeksBundle {
                price: s,
                delta: 1.0,
                ..Default::default()
            };
        }
        let k = (s / strike).ln();
        let it = self.integrals(k, true);
        let root_sk = (s * strike).sqrt();
        let root_ks = (strike / s).sqrt();
        let price = s - root_sk * it.i0;
        let delta = 1.0 - root_ks * (0.5 * it.i0 + it.ik);
        let d_nu = -root_sk * it.inu;
        let d_nunu = -root_sk * it.inunu;
        let d_snu = -root_ks * (0.5 * it.inu + it.iknu);
        let sq = self.nu.sqrt();
        GreeksBundle {
            price,
            delta,
            vega: 2.0 * sq * d_nu,
            vanna: 2.0 * sq * d_snu,
            vomma: 4.0 * self.nu * d_nunu,
        }
    }
}

/// Heston call price at `(t, S, ν)`; builds a throwaway pricer.
pub fn call_price(
    params: &HestonJumpParams,
    t: f64,
    s: f64,
    nu: f64,
    strike: f64,
    maturity: f64,
) -> Result<f64> {
    HestonPricer::new(params).call_price(t, s, nu, strike, maturity)
}

pub fn greeks(
    params: &HestonJumpParams,
    t: f64,
    s: f64,
    nu: f64,
    strike: f64,
    maturity: f64,
) -> Result<GreeksBundle> {
    HestonPricer::new(params).greeks(t, s, nu, strike, maturity)
}

fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Black-Scholes call with zero rates.
pub fn bs_call(s: f64, strike: f64, tau: f64, sigma: f64) -> f64 {
    if strike <= 0.0 {
        return s;
    }
    let sd = sigma * tau.sqrt();
    if sd <= 0.0 {
        return (s - strike).max(0.0);
    }
    let d1 = ((s / strike).ln() + 0.5 * sd * sd) / sd;
    s * norm_cdf(d1) - strike * norm_cdf(d1 - sd)
}

/// Black-Scholes vega per unit of σ.
pub fn bs_vega(s: f64, strike: f64, tau: f64, sigma: f64) -> f64 {
    let sd = sigma * tau.sqrt();
    if sd <= 0.0 || strike <= 0.0 {
        return 0.0;
    }
    let d1 = ((s / strike).ln() + 0.5 * sd * sd) / sd;
    s * norm_pdf(d1) * tau.sqrt()
}

pub fn bs_delta(s: f64, strike: f64, tau: f64, sigma: f64) -> f64 {
    let sd = sigma * tau.sqrt();
    if strike <= 0.0 {
        return 1.0;
    }
    let d1 = ((s / strike).ln() + 0.5 * sd * sd) / sd;
    norm_cdf(d1)
}

const IV_TOL: f64 = 1e-12;

/// Black-Scholes implied volatility by safeguarded Newton on a bracket.
pub fn implied_vol(price: f64, s: f64, strike: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::domain(format!("tau = {tau} must be > 0")));
    }
    let lower = (s - strike).max(0.0);
    if !(price > lower && price < s) {
        return Err(Error::domain(format!(
            "price {price} outside the no-arbitrage band ({lower}, {s})"
        )));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while bs_call(s, strike, tau, hi) < price {
        hi *= 2.0;
        if hi > 1e3 {
            return Err(Error::NoConvergence(format!("implied vol above {hi}")));
        }
    }
    let mut sigma = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = bs_call(s, strike, tau, sigma) - price;
        if f > 0.0 {
            hi = sigma;
        } else {
            lo = sigma;
        }
        let v = bs_vega(s, strike, tau, sigma);
        let newton = sigma - f / v;
        let next = if v > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - sigma).abs() < IV_TOL || hi - lo < IV_TOL {
            return Ok(next);
        }
        sigma = next;
    }
    Err(Error::NoConvergence("implied vol iteration limit".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurfacePoint {
    pub strike: f64,
    pub maturity: f64,
    pub implied_vol: f64,
}

/// Implied volatilities of the model at `(0, S₀, ν₀)` on a strike × maturity grid.
///
/// Rows are ordered maturity-major.
pub fn surface(params: &HestonJumpParams, strikes: &[f64], maturities: &[f64]) -> Result<Vec<SurfacePoint>> {
    let pricer = HestonPricer::new(params);
    let mut out = Vec::with_capacity(strikes.len() * maturities.len());
    for &maturity in maturities {
        let slice = pricer.slice(maturity, params.nu0)?;
        for &strike in strikes {
            let price = slice.price(params.s0, strike);
            let iv = implied_vol(price, params.s0, strike, maturity).map_err(|e| {
                Error::domain(format!("cell (K={strike}, T={maturity}): {e}"))
            })?;
            out.push(SurfacePoint {
                strike,
                maturity,
                implied_vol: iv,
            });
        }
    }
    Ok(out)
}
