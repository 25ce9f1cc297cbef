mod common;

use common::{fd_greeks, heston_call_trapezoid, heston_zero_volvol, reference};
use proptest::prelude::*;
use vegabook_core::pricing::{implied_vol, surface};
use vegabook_core::{GreeksBundle, HestonPricer};

fn lattice() -> impl Iterator<Item = (f64, f64)> {
    (0..10).flat_map(|a| (0..10).map(move |b| (85.0 + 30.0 * a as f64 / 9.0, 0.01 + 0.08 * b as f64 / 9.0)))
}

fn fields(g: &GreeksBundle) -> [f64; 5] {
    [g.price, g.delta, g.vega, g.vanna, g.vomma]
}

#[test]
fn greeks_match_finite_differences() {
    let p = reference();
    let pricer = HestonPricer::new(&p);
    for (strike, maturity) in [(100.0, 0.3), (97.0, 0.7)] {
        let pairs: Vec<_> = lattice()
            .map(|(s, nu)| (pricer.greeks(0.0, s, nu, strike, maturity).unwrap(), fd_greeks(&pricer, s, nu, strike, maturity)))
            .collect();
        for k in 1..5 {
            // Vanna and Vomma change sign on the lattice; errors are measured
            // against the larger of the local value and 1e−3 of the lattice scale.
            let scale = pairs.iter().map(|(_, f)| fields(f)[k].abs()).fold(0.0, f64::max);
            for (a, f) in &pairs {
                let (x, y) = (fields(a)[k], fields(f)[k]);
                let err = (x - y).abs() / y.abs().max(1e-3 * scale);
                assert!(err <= 1e-4, "greek {k} (K={strike}, T={maturity}): {x} vs {y} ({err:e})");
            }
        }
    }
}

#[test]
fn zero_vol_of_vol_is_black_scholes() {
    let mut p = reference();
    p.xi = 0.0;
    let pricer = HestonPricer::new(&p);
    for (s, nu) in lattice() {
        for (strike, tau) in [(97.0, 0.3), (100.0, 0.5), (103.0, 0.7)] {
            let got = fields(&pricer.greeks(0.0, s, nu, strike, tau).unwrap());
            let want = fields(&heston_zero_volvol(&p, s, nu, strike, tau));
            for k in 0..5 {
                assert!((got[k] - want[k]).abs() <= 1e-6, "greek {k} at S={s}, nu={nu}: {} vs {}", got[k], want[k]);
            }
        }
    }
}

#[test]
fn matches_independent_trapezoid_pricer() {
    let p = reference();
    let pricer = HestonPricer::new(&p);
    for (s, strike, tau) in [(100.0, 100.0, 0.3), (95.0, 97.0, 0.7), (110.0, 99.0, 0.4)] {
        let oracle = heston_call_trapezoid(&p, s, 0.04, strike, tau);
        let got = pricer.call_price(0.0, s, 0.04, strike, tau).unwrap();
        assert!((got - oracle).abs() < 1e-8, "{got} vs {oracle}");
    }
    // Frozen from the trapezoid oracle.
    let atm = pricer.call_price(0.0, 100.0, 0.04, 100.0, 0.3).unwrap();
    assert!((atm - FROZEN_ATM).abs() < 1e-8, "{atm:.12}");
}

const FROZEN_ATM: f64 = 3.886820539466;

#[test]
fn implied_surface_has_negative_skew() {
    let p = reference();
    let strikes = [97.0, 98.0, 99.0, 100.0];
    let maturities = [0.3, 0.4, 0.5, 0.6, 0.7];
    let pts = surface(&p, &strikes, &maturities).unwrap();
    for row in pts.chunks(4) {
        for w in row.windows(2) {
            assert!(w[0].implied_vol > w[1].implied_vol);
        }
    }
    // At-the-money levels, frozen from the trapezoid oracle's prices.
    let pricer_free: Vec<f64> = maturities
        .iter()
        .map(|&t| implied_vol(heston_call_trapezoid(&p, 100.0, 0.04, 100.0, t), 100.0, 100.0, t).unwrap())
        .collect();
    for ((row, &oracle), &frozen) in pts.chunks(4).zip(&pricer_free).zip(&FROZEN_ATM_VOLS) {
        assert!((row[3].implied_vol - oracle).abs() < 1e-8);
        assert!((oracle - frozen).abs() < 1e-8, "{oracle:.12}");
    }
}

const FROZEN_ATM_VOLS: [f64; 5] = [0.177949049467, 0.174611039067, 0.172411213184, 0.170963409789, 0.170023708083];

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn price_respects_no_arbitrage_bounds(
        s in 70.0f64..130.0,
        nu in 0.005f64..0.15,
        strike in 80.0f64..120.0,
        tau in 0.05f64..1.0,
    ) {
        let pricer = HestonPricer::new(&reference());
        let g = pricer.greeks(0.0, s, nu, strike, tau).unwrap();
        prop_assert!(g.price >= (s - strike).max(0.0) - 1e-8 && g.price <= s);
        prop_assert!(g.delta > -1e-8 && g.delta < 1.0 + 1e-8);
        // Far out of the money all values sit at the quadrature floor.
        prop_assert!(g.vega > -1e-8);
        if g.price > 1e-4 {
            prop_assert!(g.vega > 0.0);
        }
    }

    #[test]
    fn implied_vol_inverts_black_scholes(sigma in 0.05f64..0.8, strike in 80.0f64..120.0, tau in 0.1f64..1.0) {
        let price = vegabook_core::pricing::bs_call(100.0, strike, tau, sigma);
        prop_assume!(price - (100.0 - strike).max(0.0) > 1e-6);
        let iv = implied_vol(price, 100.0, strike, tau).unwrap();
        prop_assert!((iv - sigma).abs() < 1e-6);
    }
}

