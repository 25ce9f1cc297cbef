mod common;

use std::sync::OnceLock;

use common::{reference, reference_book};
use proptest::prelude::*;
use vegabook_core::baseline::{solve_baseline, BaselineConfig, BaselineFields, VegaPortfolioGrid};
use vegabook_core::hamiltonian::optimal_quote;
use vegabook_core::{BookSpec, Side};

fn book() -> BookSpec {
    reference_book().subset(&[0, 3, 16, 19])
}

fn config(steps: usize) -> BaselineConfig {
    BaselineConfig {
        nu_nodes: 24,
        vega_nodes: 61,
        steps,
        ..Default::default()
    }
}

fn run(cfg: &BaselineConfig) -> BaselineFields {
    let p = reference();
    let b = book();
    let grid = VegaPortfolioGrid::new(cfg, &p, &b, 0.004).unwrap();
    solve_baseline(&grid, &p, &b, cfg).unwrap()
}

fn shared() -> &'static BaselineFields {
    static CELL: OnceLock<BaselineFields> = OnceLock::new();
    CELL.get_or_init(|| run(&config(100)))
}

#[test]
fn time_refinement_converges() {
    let probe = |f: &BaselineFields| {
        let span = f.grid.vega.hi;
        [0.0, 0.25 * span, -0.5 * span].map(|v| f.value(0.0, 0.04, v))
    };
    // The explicit sub-step cap is refined with the step count; in the
    // reference setup the value does not depend on ν, so it alone sets Δt.
    let v: Vec<[f64; 3]> = [(25, 0.4), (50, 0.2), (100, 0.1), (200, 0.05)]
        .iter()
        .map(|&(n, r)| probe(&run(&BaselineConfig { max_rate_dt: r, ..config(n) })))
        .collect();
    for k in 0..3 {
        let d1 = (v[1][k] - v[0][k]).abs();
        let d2 = (v[2][k] - v[1][k]).abs();
        let d3 = (v[3][k] - v[2][k]).abs();
        assert!(d2 < d1 && d3 < d2, "probe {k}: {d1:e} {d2:e} {d3:e}");
        // First order in Δt.
        assert!(d2 / d3 > 1.5 && d2 / d3 < 3.0, "probe {k}: ratio {}", d2 / d3);
    }
}

#[test]
fn flat_book_value_is_the_best_position() {
    let f = shared();
    let nv = f.grid.vega.n;
    for slice in &f.slices {
        for row in slice.chunks(nv) {
            let top = row[nv / 2];
            assert!(row.iter().all(|&x| x <= top + 1e-8 * top.abs()));
            for w in row.windows(3) {
                assert!(w[0] + w[2] - 2.0 * w[1] <= 1e-8 * top.abs().max(1.0));
            }
        }
    }
}

#[test]
fn spreads_return_to_flat_quote_at_the_horizon() {
    let f = shared();
    let v = 0.3 * f.grid.vega.hi;
    for j in 0..4 {
        let got = f.quote(0.004, 0.04, v, j, Side::Ask, 0.0).unwrap().delta;
        let flat = optimal_quote(&f.intensity[j].ask, f.grid.frozen_vegas[j], 0.0).unwrap().argmax;
        assert!((got - flat).abs() <= 1e-12 * flat);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn ask_spread_nonincreasing_in_portfolio_vega(
        x in -0.8f64..0.8,
        dx in 0.01f64..0.2,
        t in 0.0f64..0.004,
        nu in 0.01f64..0.1,
        j in 0usize..4,
    ) {
        let f = shared();
        let span = f.grid.vega.hi;
        let lo = f.quote(t, nu, x * span, j, Side::Ask, 0.0).unwrap().delta;
        let hi = f.quote(t, nu, (x + dx) * span, j, Side::Ask, 0.0).unwrap().delta;
        prop_assert!(hi <= lo + 1e-10 * lo.abs());
    }

    #[test]
    fn bid_mirrors_ask(x in -0.8f64..0.8, t in 0.0f64..0.004, nu in 0.01f64..0.1, j in 0usize..4) {
        let f = shared();
        let v = x * f.grid.vega.hi;
        let a = f.quote(t, nu, v, j, Side::Ask, 0.0).unwrap().delta;
        let b = f.quote(t, nu, -v, j, Side::Bid, 0.0).unwrap().delta;
        prop_assert!((a - b).abs() <= 1e-8 * a.abs());
    }
}
