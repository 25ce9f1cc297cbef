use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use vegabook_bench::{book, market, reference, small_solver, HORIZON};
use vegabook_core::hamiltonian::optimal_quote;
use vegabook_core::sim::{build_tape, path_rng, run_path, simulate_underlying, SimConfig, Strategy};
use vegabook_core::theta::ThetaProblem;
use vegabook_core::{CorrelationStructure, HestonPricer};

fn hamiltonian(c: &mut Criterion) {
    let ip = book().intensity[3].ask;
    c.bench_function("optimal_quote", |b| {
        b.iter(|| optimal_quote(black_box(&ip), black_box(21.8), black_box(0.3)).unwrap())
    });
}

fn greeks(c: &mut Criterion) {
    let p = reference();
    let pricer = HestonPricer::new(&p);
    let mut group = c.benchmark_group("greeks");
    for maturity in [0.3, 0.7] {
        group.bench_with_input(BenchmarkId::from_parameter(maturity), &maturity, |b, &m| {
            b.iter(|| pricer.greeks(0.0, black_box(101.0), black_box(0.05), 98.0, m).unwrap())
        });
    }
    group.finish();
}

fn theta_solve(c: &mut Criterion) {
    let p = reference();
    let corr = CorrelationStructure::identity(1);
    let mut group = c.benchmark_group("theta_solve");
    group.sample_size(10);
    for n in [4usize, 20] {
        let b4 = book().subset(&(0..n).collect::<Vec<_>>());
        group.bench_with_input(BenchmarkId::new("options", n), &b4, |b, bk| {
            b.iter(|| {
                ThetaProblem::new(std::slice::from_ref(&p), &corr, bk, HORIZON, &small_solver())
                    .unwrap()
                    .solve_system()
                    .unwrap()
            })
        });
    }
    group.finish();
}

fn sim_path(c: &mut Criterion) {
    let m = market(book().subset(&[0, 3, 16, 19]));
    let fields = ThetaProblem::new(&m.params, &m.corr, &m.book, HORIZON, &small_solver())
        .unwrap()
        .solve_system()
        .unwrap();
    let cfg = SimConfig {
        n_paths: 1,
        steps: 1200,
        ..Default::default()
    };
    let pricers = [HestonPricer::new(&m.params[0])];
    let mut rng = path_rng(cfg.seed, 0, 0);
    let path = simulate_underlying(&m.params, &m.corr, HORIZON, cfg.steps, &mut rng).unwrap();
    let tape = build_tape(&path, &m.book, &pricers).unwrap();

    let mut group = c.benchmark_group("sim_path");
    group.sample_size(20);
    group.bench_function("underlying_and_tape", |b| {
        b.iter(|| {
            let mut rng = path_rng(cfg.seed, 0, 0);
            let path = simulate_underlying(&m.params, &m.corr, HORIZON, cfg.steps, &mut rng).unwrap();
            build_tape(&path, &m.book, &pricers).unwrap()
        })
    });
    group.bench_function("theta_strategy", |b| {
        b.iter(|| {
            let mut rng = path_rng(cfg.seed, 0, 1);
            run_path(&m, &Strategy::Theta(&fields), &cfg, 0, &path, &tape, &mut rng).unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, hamiltonian, greeks, theta_solve, sim_path);
criterion_main!(benches);
