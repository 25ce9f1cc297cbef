//! One-page text summary of a comparison run.

use std::fmt::Write;

use vegabook_core::sim::{report::quantile, SimReport, StrategyKind};

use crate::config::RunConfig;

const QUANTILES: [f64; 9] = [0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99];

pub fn render(cfg: &RunConfig, reports: &[SimReport]) -> String {
    let mut s = String::new();
    let sim = &cfg.sim;
    let _ = writeln!(s, "vegabook compare");
    let _ = writeln!(
        s,
        "paths {}  seed {}  steps {}  horizon {}  gamma {:e}\n",
        sim.n_paths, sim.seed, sim.steps, sim.horizon, cfg.solver.gamma
    );

    let _ = writeln!(
        s,
        "{:<10} {:>16} {:>14} {:>16} {:>10} {:>10}",
        "strategy", "mean_pnl", "stderr", "objective", "fills", "requests"
    );
    for r in reports {
        let fills: usize = r.fills.iter().map(|f| f[0] + f[1]).sum();
        let requests: usize = r.requests.iter().sum();
        let _ = writeln!(
            s,
            "{:<10} {:>16.2} {:>14.2} {:>16.2} {:>10} {:>10}",
            r.strategy.as_str(),
            r.mean_pnl,
            r.stderr_pnl,
            r.objective,
            fills,
            requests
        );
    }

    let find = |k: StrategyKind| reports.iter().find(|r| r.strategy == k);
    if let (Some(t), Some(b)) = (find(StrategyKind::Theta), find(StrategyKind::Baseline)) {
        let d: Vec<f64> = t.terminal_pnl.iter().zip(&b.terminal_pnl).map(|(x, y)| x - y).collect();
        let n = d.len() as f64;
        let m = d.iter().sum::<f64>() / n;
        let se = if d.len() > 1 {
            (d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            f64::NAN
        };
        let wins = d.iter().filter(|&&x| x > 0.0).count();
        let _ = writeln!(
            s,
            "\npaired terminal PnL, theta minus baseline: {m:.2} ± {se:.2} (theta ahead on {wins}/{} paths)",
            d.len()
        );
    }

    let _ = writeln!(s, "\nPnL per request by intraday bucket (mean ± stderr)");
    let _ = write!(s, "{:>10} {:>10}", "start", "end");
    for r in reports {
        let _ = write!(s, " {:>24}", r.strategy.as_str());
    }
    let _ = writeln!(s);
    for (k, b) in reports[0].buckets.iter().enumerate() {
        let _ = write!(s, "{:>10.5} {:>10.5}", b.start, b.end);
        for r in reports {
            let b = &r.buckets[k];
            let _ = write!(s, " {:>24}", format!("{:.1} ± {:.1}", b.mean, b.stderr));
        }
        let _ = writeln!(s);
    }

    let _ = writeln!(s, "\nterminal PnL quantiles");
    let _ = write!(s, "{:>6}", "p");
    for r in reports {
        let _ = write!(s, " {:>16}", r.strategy.as_str());
    }
    let _ = writeln!(s);
    let sorted: Vec<Vec<f64>> = reports
        .iter()
        .map(|r| {
            let mut v = r.terminal_pnl.clone();
            v.sort_by(f64::total_cmp);
            v
        })
        .collect();
    for p in QUANTILES {
        let _ = write!(s, "{p:>6.2}");
        for v in &sorted {
            let _ = write!(s, " {:>16.2}", quantile(v, p));
        }
        let _ = writeln!(s);
    }
    s
}
