//! Run configuration: one JSON document, unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vegabook_core::baseline::BaselineConfig;
use vegabook_core::book::BookRules;
use vegabook_core::market::validate;
use vegabook_core::sim::{SimConfig, StrategyKind};
use vegabook_core::theta::ThetaConfig;
use vegabook_core::{BookSpec, CorrelationStructure, HestonJumpParams, Side};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// One parameter block per underlying.
    pub model: Vec<HestonJumpParams>,
    pub corr: CorrelationStructure,
    pub book: BookRules,
    pub solver: ThetaConfig,
    /// `baseline.gamma` defaults to `solver.gamma` when omitted.
    pub baseline: BaselineConfig,
    /// `sim.horizon` is also the horizon of both solvers.
    pub sim: SimConfig,
    pub quotes: QuoteSweep,
    /// Half-spread of the `constant` strategy.
    pub constant_quote: Option<f64>,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: vec![HestonJumpParams::reference()],
            corr: CorrelationStructure::identity(1),
            book: BookRules::default(),
            solver: ThetaConfig::default(),
            baseline: BaselineConfig::default(),
            sim: SimConfig::default(),
            quotes: QuoteSweep::default(),
            constant_quote: None,
            output: OutputConfig::default(),
        }
    }
}

/// Axis ranges for the quote sweep at `t = 0`, `q = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuoteSweep {
    pub s_range: [f64; 2],
    pub nu_range: [f64; 2],
    pub points: usize,
    /// Spot held fixed during a ν sweep; defaults to `S₀`.
    pub s: Option<f64>,
    /// Variance held fixed during an S sweep; defaults to `ν₀`.
    pub nu: Option<f64>,
    pub sides: Vec<Side>,
}

impl Default for QuoteSweep {
    fn default() -> Self {
        Self {
            s_range: [85.0, 115.0],
            nu_range: [0.01, 0.1],
            points: 31,
            s: None,
            nu: None,
            sides: vec![Side::Bid, Side::Ask],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Times at which `θ` slices are exported (nearest stored slice).
    pub export_times: Vec<f64>,
    /// Re-solve on a half-resolution mesh and compare residuals.
    pub refinement_probe: bool,
    /// Reuse solved fields from `<dir>/cache` when the inputs match.
    pub cache: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            export_times: vec![0.0],
            refinement_probe: true,
            cache: true,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Parse and check. Errors carry the field path and source position.
    pub fn parse(text: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        let mut cfg: RunConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            CliError::Config(format!("at `{path}` (line {}, column {}): {inner}", inner.line(), inner.column()))
        })?;
        de.end().map_err(|e| CliError::Config(e.to_string()))?;
        let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if raw.pointer("/baseline/gamma").is_none() {
            cfg.baseline.gamma = cfg.solver.gamma;
        }
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Err(CliError::Config(format!("at `{field}`: {msg}")));
        if self.model.is_empty() {
            return bad("model", "at least one underlying is required");
        }
        if self.corr.dim() != self.model.len() {
            return bad("corr", "dimension must match the number of model entries");
        }
        if self.book.underlying >= self.model.len() {
            return bad("book.underlying", "index out of range");
        }
        if self.baseline.gamma != self.solver.gamma {
            return bad("baseline.gamma", "must equal solver.gamma");
        }
        if self.sim.strategies.is_empty() {
            return bad("sim.strategies", "at least one strategy is required");
        }
        if self.sim.strategies.contains(&StrategyKind::Baseline) && self.model.len() != 1 {
            return bad("sim.strategies", "the baseline strategy supports a single underlying only");
        }
        if self.sim.strategies.contains(&StrategyKind::Constant) && !self.constant_quote.is_some_and(|d| d >= 0.0) {
            return bad("constant_quote", "a non-negative half-spread is required by the constant strategy");
        }
        if self.quotes.points == 0 || self.quotes.sides.is_empty() {
            return bad("quotes", "points and sides must be non-empty");
        }
        if self.output.export_times.iter().any(|t| !(0.0..=self.sim.horizon).contains(t)) {
            return bad("output.export_times", "times must lie in [0, sim.horizon]");
        }
        self.solver.check().map_err(|e| CliError::Config(format!("at `solver`: {e}")))?;
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        self.sim.horizon
    }

    pub fn underlying(&self) -> &HestonJumpParams {
        &self.model[self.book.underlying]
    }

    /// Build the option book and run the market invariant checks.
    pub fn market_book(&self) -> Result<BookSpec> {
        let book = self.book.build(self.underlying())?;
        let report = validate(&self.model, &self.corr, &book, self.horizon());
        for w in report.warnings() {
            log::warn!("{}: {}", w.name, w.message);
        }
        report.into_result()?;
        self.sim.check(&book).map_err(|e| CliError::Config(format!("at `sim`: {e}")))?;
        Ok(book)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}
