//! Model coefficients, correlation structure and the option book.

use serde::{Deserialize, Serialize};

use crate::hamiltonian::{IntensityParams, Side};
use crate::linalg;

/// Probability measure under which coefficients are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Measure {
    /// Historical measure, drives the simulator and the control problem.
    Physical,
    /// Risk-neutral measure, drives option prices.
    RiskNeutral,
}

/// One atom of the jump-size distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpMark {
    /// Additive spot jump (currency).
    pub size: f64,
    pub prob: f64,
}

/// Compound Poisson jumps in the spot with a finite mark distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpSpec {
    /// Arrival intensity per year (total mass of the kernel).
    pub rate: f64,
    #[serde(default)]
    pub marks: Vec<JumpMark>,
    /// Subtract `rate * E[size]` from the spot drift under both measures.
    #[serde(default)]
    pub compensated: bool,
}

impl JumpSpec {
    pub fn none() -> Self {
        Self {
            rate: 0.0,
            marks: Vec::new(),
            compensated: false,
        }
    }

    pub fn is_active(&self) -> bool {
        self.rate > 0.0 && !self.marks.is_empty()
    }

    pub fn mean_size(&self) -> f64 {
        self.marks.iter().map(|m| m.size * m.prob).sum()
    }

    /// Drift correction applied to the spot, zero unless compensated.
    pub fn drift_correction(&self) -> f64 {
        if self.compensated && self.is_active() {
            self.rate * self.mean_size()
        } else {
            0.0
        }
    }
}

impl Default for JumpSpec {
    fn default() -> Self {
        Self::none()
    }
}

/// Heston dynamics with jumps for one underlying, under both measures.
///
/// Spot: `dS = μS dt + S√ν⁺ dW^S + jumps`; variance:
/// `dν = κ(θ − ν) dt + ξ√ν⁺ dW^ν` with `d⟨W^S, W^ν⟩ = ρ dt`. The
/// vol-of-vol `ξ` is shared by both measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HestonJumpParams {
    pub s0: f64,
    pub nu0: f64,
    pub mu: f64,
    pub kappa_p: f64,
    pub theta_p: f64,
    pub kappa_q: f64,
    pub theta_q: f64,
    pub xi: f64,
    pub rho: f64,
    #[serde(default)]
    pub jump: JumpSpec,
}

impl HestonJumpParams {
    /// The reference single-underlying setup: S₀ = 100, ν₀ = 0.04,
    /// κ = 2, θ = 0.04 under both measures, ξ = 0.7, ρ = −0.7, no drift,
    /// no jumps.
    pub fn reference() -> Self {
        Self {
            s0: 100.0,
            nu0: 0.04,
            mu: 0.0,
            kappa_p: 2.0,
            theta_p: 0.04,
            kappa_q: 2.0,
            theta_q: 0.04,
            xi: 0.7,
            rho: -0.7,
            jump: JumpSpec::none(),
        }
    }

    pub fn feller_satisfied(&self) -> bool {
        2.0 * self.kappa_p * self.theta_p >= self.xi * self.xi
    }

    pub fn mean_reversion(&self, measure: Measure) -> (f64, f64) {
        match measure {
            Measure::Physical => (self.kappa_p, self.theta_p),
            Measure::RiskNeutral => (self.kappa_q, self.theta_q),
        }
    }

    /// Drift and volatility of spot and variance at `(t, S, ν)`.
    ///
    /// Negative variance is truncated to zero before evaluation.
    pub fn coefficients(&self, measure: Measure, _t: f64, s: f64, nu: f64) -> Coefficients {
        let nu = nu.max(0.0);
        let sq = nu.sqrt();
        let (kappa, theta) = self.mean_reversion(measure);
        let drift_s = match measure {
            Measure::Physical => self.mu * s,
            Measure::RiskNeutral => 0.0,
        } - self.jump.drift_correction();
        Coefficients {
            drift_s,
            vol_s: s * sq,
            drift_nu: kappa * (theta - nu),
            vol_nu: self.xi * sq,
        }
    }
}

/// `(b, σ, a, v)` evaluated at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub drift_s: f64,
    pub vol_s: f64,
    pub drift_nu: f64,
    pub vol_nu: f64,
}

/// Free-function form of [`HestonJumpParams::coefficients`].
pub fn coeff_eval(params: &HestonJumpParams, measure: Measure, t: f64, s: f64, nu: f64) -> Coefficients {
    params.coefficients(measure, t, s, nu)
}

/// Cross-underlying correlation of spots and of variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationStructure {
    pub sigma_s: Vec<Vec<f64>>,
    pub sigma_nu: Vec<Vec<f64>>,
}

impl CorrelationStructure {
    pub fn identity(d: usize) -> Self {
        let eye: Vec<Vec<f64>> = (0..d)
            .map(|i| (0..d).map(|k| if i == k { 1.0 } else { 0.0 }).collect())
            .collect();
        Self {
            sigma_s: eye.clone(),
            sigma_nu: eye,
        }
    }

    pub fn dim(&self) -> usize {
        self.sigma_s.len()
    }

    /// Joint correlation of `(W^{1,S}, …, W^{d,S}, W^{1,ν}, …, W^{d,ν})`.
    ///
    /// Spot and variance of the same underlying correlate through `ρⁱ`;
    /// there is no spot/variance correlation across underlyings.
    pub fn joint(&self, rhos: &[f64]) -> Vec<Vec<f64>> {
        let d = self.dim();
        let mut m = vec![vec![0.0; 2 * d]; 2 * d];
        for i in 0..d {
            for k in 0..d {
                m[i][k] = self.sigma_s[i][k];
                m[d + i][d + k] = self.sigma_nu[i][k];
            }
            m[i][d + i] = rhos[i];
            m[d + i][i] = rhos[i];
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Payoff {
    #[default]
    Call,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionSpec {
    /// Zero-based underlying index.
    pub underlying: usize,
    pub strike: f64,
    pub maturity: f64,
    #[serde(default)]
    pub payoff: Payoff,
}

impl OptionSpec {
    pub fn call(underlying: usize, strike: f64, maturity: f64) -> Self {
        Self {
            underlying,
            strike,
            maturity,
            payoff: Payoff::Call,
        }
    }
}

/// Intensity parameters for both sides of one option.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuotePair {
    pub bid: IntensityParams,
    pub ask: IntensityParams,
}

impl QuotePair {
    pub fn symmetric(lambda_max: f64, alpha: f64, beta: f64) -> Self {
        Self {
            bid: IntensityParams::new(lambda_max, alpha, beta, Side::Bid),
            ask: IntensityParams::new(lambda_max, alpha, beta, Side::Ask),
        }
    }

    pub fn side(&self, side: Side) -> &IntensityParams {
        match side {
            Side::Bid => &self.bid,
            Side::Ask => &self.ask,
        }
    }
}

/// The quoted option set. Options are ordered by underlying.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BookSpec {
    pub options: Vec<OptionSpec>,
    /// Contracts per transaction for each option.
    pub trade_size: Vec<f64>,
    pub intensity: Vec<QuotePair>,
}

impl BookSpec {
    pub fn len(&self) -> usize {
        self.options.len()
    }

    pub fn is_empty(&self) -> bool {
        self.options.is_empty()
    }

    pub fn underlyings(&self) -> usize {
        self.options.iter().map(|o| o.underlying + 1).max().unwrap_or(0)
    }

    /// Restrict the book to the given option indices, keeping their order.
    pub fn subset(&self, idx: &[usize]) -> BookSpec {
        BookSpec {
            options: idx.iter().map(|&j| self.options[j].clone()).collect(),
            trade_size: idx.iter().map(|&j| self.trade_size[j]).collect(),
            intensity: idx.iter().map(|&j| self.intensity[j]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CheckStatus {
    Pass,
    Warn,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    pub message: String,
}

/// Outcome of [`validate`]: one entry per invariant.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    fn push(&mut self, name: impl Into<String>, ok: bool, message: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
            message: message.into(),
        });
    }

    fn warn(&mut self, name: impl Into<String>, message: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            status: CheckStatus::Warn,
            message: message.into(),
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Fail)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Warn)
    }

    pub fn find(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Convert a failing report into an error listing every failure.
    pub fn into_result(self) -> crate::Result<Self> {
        if self.passed() {
            Ok(self)
        } else {
            let msg = self
                .failures()
                .map(|c| format!("{}: {}", c.name, c.message))
                .collect::<Vec<_>>()
                .join("; ");
            Err(crate::Error::InvalidInput(msg))
        }
    }
}

const PSD_FLOOR: f64 = -1e-10;

fn check_correlation(report: &mut ValidationReport, name: &str, m: &[Vec<f64>], d: usize) {
    let square = m.len() == d && m.iter().all(|r| r.len() == d);
    report.push(format!("{name}.shape"), square, format!("expected {d}x{d}"));
    if !square {
        return;
    }
    let sym = (0..d).all(|i| (0..d).all(|k| (m[i][k] - m[k][i]).abs() <= 1e-12));
    report.push(format!("{name}.symmetric"), sym, "matrix must be symmetric");
    let unit = (0..d).all(|i| (m[i][i] - 1.0).abs() <= 1e-12);
    report.push(format!("{name}.unit_diagonal"), unit, "diagonal entries must equal 1");
    let min_eig = linalg::min_eigenvalue(m);
    report.push(
        format!("{name}.psd"),
        min_eig >= PSD_FLOOR,
        format!("smallest eigenvalue {min_eig:.3e}"),
    );
}

/// Check every invariant the other modules rely on.
///
/// Never fails itself; the caller decides what to do with failures. A
/// violated Feller condition is reported as a warning only.
pub fn validate(
    params: &[HestonJumpParams],
    corr: &CorrelationStructure,
    book: &BookSpec,
    horizon: f64,
) -> ValidationReport {
    let mut r = ValidationReport::default();
    let d = params.len();
    r.push("underlyings.nonempty", d > 0, "at least one underlying required");

    for (i, p) in params.iter().enumerate() {
        let pre = format!("model[{i}]");
        r.push(format!("{pre}.s0"), p.s0 > 0.0, format!("s0 = {} must be > 0", p.s0));
        r.push(format!("{pre}.nu0"), p.nu0 > 0.0, format!("nu0 = {} must be > 0", p.nu0));
        r.push(format!("{pre}.kappa_p"), p.kappa_p > 0.0, "kappa_p must be > 0");
        r.push(format!("{pre}.kappa_q"), p.kappa_q > 0.0, "kappa_q must be > 0");
        r.push(format!("{pre}.theta_p"), p.theta_p > 0.0, "theta_p must be > 0");
        r.push(format!("{pre}.theta_q"), p.theta_q > 0.0, "theta_q must be > 0");
        r.push(format!("{pre}.xi"), p.xi >= 0.0, "xi must be >= 0");
        r.push(
            format!("{pre}.rho"),
            p.rho.abs() < 1.0,
            format!("|rho| = {} must be < 1", p.rho.abs()),
        );
        r.push(format!("{pre}.jump.rate"), p.jump.rate >= 0.0, "jump rate must be >= 0");
        let mass: f64 = p.jump.marks.iter().map(|m| m.prob).sum();
        let marks_ok = p.jump.marks.is_empty()
            || ((mass - 1.0).abs() <= 1e-12 && p.jump.marks.iter().all(|m| m.prob >= 0.0));
        r.push(
            format!("{pre}.jump.marks"),
            marks_ok,
            format!("mark probabilities must be >= 0 and sum to 1 (sum = {mass})"),
        );
        if !p.feller_satisfied() {
            r.warn(
                format!("{pre}.feller"),
                format!(
                    "2*kappa_p*theta_p = {:.4} < xi^2 = {:.4}; variance can hit zero (full truncation applies)",
                    2.0 * p.kappa_p * p.theta_p,
                    p.xi * p.xi
                ),
            );
        }
    }

    let d_eff = d.max(1);
    check_correlation(&mut r, "corr.sigma_s", &corr.sigma_s, d_eff);
    check_correlation(&mut r, "corr.sigma_nu", &corr.sigma_nu, d_eff);
    if r.passed() && d > 0 {
        let rhos: Vec<f64> = params.iter().map(|p| p.rho).collect();
        let joint = corr.joint(&rhos);
        let min_eig = linalg::min_eigenvalue(&joint);
        r.push(
            "corr.joint_psd",
            min_eig >= PSD_FLOOR,
            format!("joint spot/variance correlation smallest eigenvalue {min_eig:.3e}"),
        );
    }

    let n = book.options.len();
    r.push("book.nonempty", n > 0, "book must contain at least one option");
    r.push(
        "book.lengths",
        book.trade_size.len() == n && book.intensity.len() == n,
        format!(
            "options {n}, trade sizes {}, intensities {}",
            book.trade_size.len(),
            book.intensity.len()
        ),
    );
    let sorted = book.options.windows(2).all(|w| w[0].underlying <= w[1].underlying);
    r.push("book.grouped", sorted, "options must be grouped by underlying");
    for (j, o) in book.options.iter().enumerate() {
        r.push(
            format!("book[{j}].underlying"),
            o.underlying < d,
            format!("underlying {} out of range (d = {d})", o.underlying),
        );
        r.push(format!("book[{j}].strike"), o.strike > 0.0, "strike must be > 0");
        r.push(
            format!("book[{j}].maturity"),
            o.maturity > horizon,
            format!("maturity {} must exceed horizon {horizon}", o.maturity),
        );
    }
    for (j, z) in book.trade_size.iter().enumerate() {
        r.push(format!("book[{j}].trade_size"), *z > 0.0, "trade size must be > 0");
    }
    for (j, ip) in book.intensity.iter().enumerate() {
        for side in [&ip.bid, &ip.ask] {
            r.push(
                format!("book[{j}].{}.lambda", side.side),
                side.lambda_max > 0.0 && side.beta > 0.0,
                "lambda and beta must be > 0",
            );
        }
    }
    r
}
