//! Shared fixtures for the benchmarks.

use vegabook_core::book::BookRules;
use vegabook_core::sim::Market;
use vegabook_core::theta::ThetaConfig;
use vegabook_core::{BookSpec, CorrelationStructure, HestonJumpParams};

pub const HORIZON: f64 = 0.004;

pub fn reference() -> HestonJumpParams {
    HestonJumpParams::reference()
}

/// The twenty-option reference book.
pub fn book() -> BookSpec {
    BookRules::default().build(&reference()).expect("reference book")
}

pub fn market(book: BookSpec) -> Market {
    Market {
        params: vec![reference()],
        corr: CorrelationStructure::identity(1),
        book,
        gamma: 2e-5,
    }
}

/// Coarse mesh that keeps a full solve under a second.
pub fn small_solver() -> ThetaConfig {
    ThetaConfig {
        s_nodes: 20,
        nu_nodes: 12,
        steps: 40,
        ..Default::default()
    }
}
