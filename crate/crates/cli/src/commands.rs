use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde_json::json;
use vegabook_core::baseline::{solve_baseline, BaselineFields, VegaPortfolioGrid};
use vegabook_core::pricing::surface;
use vegabook_core::sim::{report, run_experiment, Market, SimReport, Strategy, StrategyKind};
use vegabook_core::theta::{residual_check, ResidualProbe, ResidualReport, ThetaConfig, ThetaFields, ThetaProblem};
use vegabook_core::{BookSpec, HestonPricer};

use crate::cache::{CacheStatus, Entry};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::summary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepAxis {
    S,
    Nu,
}

struct Out {
    dir: PathBuf,
}

impl Out {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    fn write(&self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(CliError::io(&path))?;
        let mut w = BufWriter::new(file);
        f(&mut w).and_then(|_| w.flush()).map_err(CliError::io(&path))?;
        Ok(path)
    }

    fn manifest(&self, command: &str, cfg: &RunConfig, started: Instant, mut body: serde_json::Value) -> Result<()> {
        let unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        body["command"] = json!(command);
        body["config_sha256"] = json!(cfg.sha256());
        body["timestamp"] = json!({
            "unix_s": unix,
            "wall_time_s": started.elapsed().as_secs_f64(),
        });
        let text = serde_json::to_string_pretty(&body).expect("manifest serializes");
        self.write(&format!("manifest_{command}.json"), |w| writeln!(w, "{text}"))?;
        Ok(())
    }

    fn cache_dir(&self) -> PathBuf {
        self.dir.join("cache")
    }
}

/// Solver settings used by every command, so cached fields are shared.
fn solver_config(cfg: &RunConfig) -> ThetaConfig {
    ThetaConfig {
        store_pairs: true,
        ..cfg.solver.clone()
    }
}

fn theta_entry(cfg: &RunConfig, out: &Out) -> Entry {
    let inputs = json!({
        "model": cfg.model,
        "corr": cfg.corr,
        "book": cfg.book,
        "solver": solver_config(cfg),
        "horizon": cfg.horizon(),
    });
    Entry::new(&out.cache_dir(), "theta", &inputs.to_string())
}

fn baseline_entry(cfg: &RunConfig, out: &Out) -> Entry {
    let inputs = json!({
        "model": cfg.underlying(),
        "book": cfg.book,
        "baseline": cfg.baseline,
        "horizon": cfg.horizon(),
    });
    Entry::new(&out.cache_dir(), "baseline", &inputs.to_string())
}

fn build_problem(cfg: &RunConfig, book: &BookSpec, solver: &ThetaConfig) -> Result<ThetaProblem> {
    Ok(ThetaProblem::new(&cfg.model, &cfg.corr, book, cfg.horizon(), solver)?)
}

/// Solved `θ` fields, from the cache when possible.
fn obtain_theta(cfg: &RunConfig, book: &BookSpec, out: &Out) -> Result<(ThetaFields, CacheStatus)> {
    obtain_theta_with_problem(cfg, book, out).map(|(f, s, _)| (f, s))
}

/// As [`obtain_theta`], also returning the problem when a solve was needed.
fn obtain_theta_with_problem(
    cfg: &RunConfig,
    book: &BookSpec,
    out: &Out,
) -> Result<(ThetaFields, CacheStatus, Option<ThetaProblem>)> {
    let solver = solver_config(cfg);
    let entry = theta_entry(cfg, out);
    if cfg.output.cache {
        if let Some(payload) = entry.load() {
            let grid = solver.grid(&cfg.model, cfg.horizon())?;
            match ThetaFields::read_binary(grid, payload.as_slice()) {
                Ok(f) => {
                    log::info!("theta fields loaded from {}", entry.path.display());
                    return Ok((f, entry.status(true, &payload), None));
                }
                Err(e) => log::warn!("unreadable cache {}: {e}", entry.path.display()),
            }
        }
    }
    log::info!("solving theta system ({} options)", book.len());
    let prob = build_problem(cfg, book, &solver)?;
    let f = prob.solve_system()?;
    let mut payload = Vec::new();
    f.write_binary(&mut payload).expect("in-memory write");
    if cfg.output.cache {
        entry.store(&payload)?;
    }
    Ok((f, entry.status(false, &payload), Some(prob)))
}

fn baseline_to_bytes(f: &BaselineFields) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * f.slices.iter().map(Vec::len).sum::<usize>());
    out.extend_from_slice(&(f.slices.len() as u64).to_le_bytes());
    out.extend_from_slice(&(f.grid.len() as u64).to_le_bytes());
    for x in f.slices.iter().flatten() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

fn baseline_from_bytes(grid: VegaPortfolioGrid, book: &BookSpec, bytes: &[u8]) -> Option<BaselineFields> {
    let word = |k: usize| Some(u64::from_le_bytes(bytes.get(8 * k..8 * k + 8)?.try_into().ok()?) as usize);
    let (ns, len) = (word(0)?, word(1)?);
    if len != grid.len() || ns != grid.steps + 1 || bytes.len() != 16 + 8 * ns * len {
        return None;
    }
    let values: Vec<f64> = bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Some(BaselineFields {
        grid,
        trade_size: book.trade_size.clone(),
        intensity: book.intensity.clone(),
        slices: values.chunks(len).map(<[f64]>::to_vec).collect(),
    })
}

fn obtain_baseline(cfg: &RunConfig, book: &BookSpec, out: &Out) -> Result<(BaselineFields, CacheStatus)> {
    let p = cfg.underlying();
    let grid = VegaPortfolioGrid::new(&cfg.baseline, p, book, cfg.horizon())?;
    let entry = baseline_entry(cfg, out);
    if cfg.output.cache {
        if let Some(payload) = entry.load() {
            if let Some(f) = baseline_from_bytes(grid.clone(), book, &payload) {
                log::info!("baseline fields loaded from {}", entry.path.display());
                return Ok((f, entry.status(true, &payload)));
            }
        }
    }
    log::info!("solving constant-Vega baseline");
    let f = solve_baseline(&grid, p, book, &cfg.baseline)?;
    let payload = baseline_to_bytes(&f);
    if cfg.output.cache {
        entry.store(&payload)?;
    }
    Ok((f, entry.status(false, &payload)))
}

fn needs(cfg: &RunConfig, kind: StrategyKind) -> bool {
    cfg.sim.strategies.contains(&kind)
}

pub fn surface_cmd(cfg: &RunConfig) -> Result<()> {
    let started = Instant::now();
    let out = Out::new(&cfg.output.dir)?;
    cfg.market_book()?;
    let pts = surface(cfg.underlying(), &cfg.book.strikes, &cfg.book.maturities)?;
    let path = out.write("surface.csv", |w| {
        writeln!(w, "strike,maturity,implied_vol")?;
        for p in &pts {
            writeln!(w, "{},{},{}", p.strike, p.maturity, p.implied_vol)?;
        }
        Ok(())
    })?;
    out.manifest("surface", cfg, started, json!({ "files": [path], "rows": pts.len() }))
}

fn residual_json(r: &ResidualReport) -> serde_json::Value {
    serde_json::to_value(r).expect("report serializes")
}

fn residual_of(cfg: &RunConfig, book: &BookSpec, prob: &ThetaProblem, fields: &ThetaFields) -> Result<ResidualReport> {
    let probe = ResidualProbe::standard(&book.trade_size).with_box(&cfg.model, (0.9, 1.1), (0.02, 0.08));
    Ok(residual_check(prob, fields, &probe)?)
}

pub fn solve_cmd(cfg: &RunConfig) -> Result<()> {
    let started = Instant::now();
    let out = Out::new(&cfg.output.dir)?;
    let book = cfg.market_book()?;
    let solver = solver_config(cfg);
    let (f, theta_cache, prob) = obtain_theta_with_problem(cfg, &book, &out)?;
    let prob = match prob {
        Some(p) => p,
        None => build_problem(cfg, &book, &solver)?,
    };
    log::info!("residual check");
    let residual = residual_of(cfg, &book, &prob, &f)?;
    drop(prob);

    let refinement = if cfg.output.refinement_probe {
        let coarse = ThetaConfig {
            s_nodes: (solver.s_nodes / 2).max(3),
            nu_nodes: (solver.nu_nodes / 2).max(3),
            steps: (solver.steps / 2).max(1),
            store_stride: (solver.store_stride / 2).max(1),
            source_knot_stride: (solver.source_knot_stride / 2).max(1),
            ..solver.clone()
        };
        log::info!("refinement probe on {}x{}x{}", coarse.s_nodes, coarse.nu_nodes, coarse.steps);
        let coarse_prob = build_problem(cfg, &book, &coarse)?;
        let coarse_fields = coarse_prob.solve_system()?;
        let r = residual_of(cfg, &book, &coarse_prob, &coarse_fields)?;
        json!({
            "coarse_grid": { "s_nodes": coarse.s_nodes, "nu_nodes": coarse.nu_nodes, "steps": coarse.steps },
            "coarse_residual": r.max_abs,
            "fine_residual": residual.max_abs,
            "ratio": r.max_abs / residual.max_abs,
            "decreasing": residual.max_abs < r.max_abs,
        })
    } else {
        serde_json::Value::Null
    };

    let mut files = Vec::new();
    if f.grid.d() == 1 {
        let mut slices: Vec<usize> = cfg
            .output
            .export_times
            .iter()
            .map(|&t| nearest(&f.times, t))
            .collect();
        slices.dedup();
        for &k in &slices {
            let path = out.dir.join(format!("theta_slice_{k:03}.csv"));
            let file = File::create(&path).map_err(CliError::io(&path))?;
            let mut w = BufWriter::new(file);
            f.write_csv(&mut w, &[k])?;
            w.flush().map_err(CliError::io(&path))?;
            files.push(path);
        }
    } else {
        log::warn!("field export skipped: more than one underlying");
    }

    let baseline_cache = if needs(cfg, StrategyKind::Baseline) {
        let (b, status) = obtain_baseline(cfg, &book, &out)?;
        let dt = b.grid.dt();
        let mut steps: Vec<usize> = cfg
            .output
            .export_times
            .iter()
            .map(|&t| ((t / dt).round() as usize).min(b.grid.steps))
            .collect();
        steps.dedup();
        for &n in &steps {
            files.push(out.write(&format!("baseline_slice_{n:04}.csv"), |w| b.write_csv(w, &[n]))?);
        }
        Some(status)
    } else {
        None
    };

    let grid = &f.grid;
    out.manifest(
        "solve",
        cfg,
        started,
        json!({
            "grid": {
                "s_nodes": solver.s_nodes,
                "nu_nodes": solver.nu_nodes,
                "s_axes": grid.s_axes.iter().map(|a| [a.lo, a.hi]).collect::<Vec<_>>(),
                "nu_axes": grid.nu_axes.iter().map(|a| [a.lo, a.hi]).collect::<Vec<_>>(),
                "steps": grid.steps,
                "dt": grid.dt(),
                "horizon": grid.horizon,
                "stored_slices": f.times.len(),
            },
            "options": book.len(),
            "gamma": solver.gamma,
            "penalty_form": solver.penalty_form,
            "hamiltonian_scaling": solver.hamiltonian_scaling,
            "tolerances": {
                "adi_theta": solver.adi_theta,
                "source_knot_stride": solver.source_knot_stride,
                "blowup_bound": solver.blowup_bound,
                "vega_floor": solver.vega_floor,
            },
            "clamped_evaluations": f.clamp_count(),
            "residual": residual_json(&residual),
            "refinement": refinement,
            "cache": { "theta": theta_cache, "baseline": baseline_cache },
            "files": files,
        }),
    )
}

fn nearest(times: &[f64], t: f64) -> usize {
    (0..times.len())
        .min_by(|&a, &b| (times[a] - t).abs().total_cmp(&(times[b] - t).abs()))
        .unwrap_or(0)
}

fn sweep_points(range: [f64; 2], n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![range[0]];
    }
    (0..n).map(|k| range[0] + (range[1] - range[0]) * k as f64 / (n - 1) as f64).collect()
}

pub fn quotes_cmd(cfg: &RunConfig, axis: SweepAxis) -> Result<()> {
    let started = Instant::now();
    let out = Out::new(&cfg.output.dir)?;
    let book = cfg.market_book()?;
    let (f, theta_cache) = obtain_theta(cfg, &book, &out)?;
    let pricers: Vec<HestonPricer> = cfg.model.iter().map(HestonPricer::new).collect();
    let q = vec![0.0; book.len()];
    let sw = &cfg.quotes;
    let xs = match axis {
        SweepAxis::S => sweep_points(sw.s_range, sw.points),
        SweepAxis::Nu => sweep_points(sw.nu_range, sw.points),
    };
    let mut rows = Vec::new();
    for (j, o) in book.options.iter().enumerate() {
        let i = o.underlying;
        let mut s: Vec<f64> = cfg.model.iter().map(|p| p.s0).collect();
        let mut nu: Vec<f64> = cfg.model.iter().map(|p| p.nu0).collect();
        s[i] = sw.s.unwrap_or(s[i]);
        nu[i] = sw.nu.unwrap_or(nu[i]);
        for &x in &xs {
            match axis {
                SweepAxis::S => s[i] = x,
                SweepAxis::Nu => nu[i] = x,
            }
            for &side in &sw.sides {
                let r = f.quote(&book, &pricers[i], 0.0, &s, &nu, &q, j, side)?;
                rows.push((j, x, side, r.delta));
            }
        }
    }
    let path = out.write("quote_sweep.csv", |w| {
        writeln!(w, "option,axis_value,side,delta_quote")?;
        for (j, x, side, d) in &rows {
            writeln!(w, "{j},{x},{side},{d}")?;
        }
        Ok(())
    })?;
    let axis = match axis {
        SweepAxis::S => "S",
        SweepAxis::Nu => "nu",
    };
    out.manifest(
        "quotes",
        cfg,
        started,
        json!({ "axis": axis, "rows": rows.len(), "cache": { "theta": theta_cache }, "files": [path] }),
    )
}

pub fn compare_cmd(cfg: &RunConfig) -> Result<()> {
    let started = Instant::now();
    let out = Out::new(&cfg.output.dir)?;
    let book = cfg.market_book()?;
    let theta = needs(cfg, StrategyKind::Theta)
        .then(|| obtain_theta(cfg, &book, &out))
        .transpose()?;
    let baseline = needs(cfg, StrategyKind::Baseline)
        .then(|| obtain_baseline(cfg, &book, &out))
        .transpose()?;
    let strategies: Vec<Strategy> = cfg
        .sim
        .strategies
        .iter()
        .map(|k| match k {
            StrategyKind::Theta => Strategy::Theta(&theta.as_ref().expect("solved").0),
            StrategyKind::Baseline => Strategy::Baseline(&baseline.as_ref().expect("solved").0),
            StrategyKind::Constant => Strategy::Constant(cfg.constant_quote.expect("checked")),
        })
        .collect();
    let market = Market {
        params: cfg.model.clone(),
        corr: cfg.corr.clone(),
        book: book.clone(),
        gamma: cfg.solver.gamma,
    };
    log::info!("simulating {} paths", cfg.sim.n_paths);
    let reports = run_experiment(&market, &strategies, &cfg.sim)?;

    let mut files = vec![
        out.write("per_request_pnl.csv", |w| report::write_per_request_pnl(w, &reports))?,
        out.write("pnl_cdf.csv", |w| report::write_pnl_cdf(w, &reports))?,
        out.write("vega_paths.csv", |w| report::write_vega_paths(w, &reports[0]))?,
    ];
    if cfg.sim.record_trades {
        for r in &reports {
            files.push(out.write(&format!("trades_{}.csv", r.strategy), |w| report::write_trades(w, r))?);
        }
    }
    let text = summary::render(cfg, &reports);
    files.push(out.write("summary.txt", |w| w.write_all(text.as_bytes()))?);
    print!("{text}");

    out.manifest(
        "compare",
        cfg,
        started,
        json!({
            "strategies": reports.iter().map(|r: &SimReport| r.strategy).collect::<Vec<_>>(),
            "paths": cfg.sim.n_paths,
            "seed": cfg.sim.seed,
            "cache": {
                "theta": theta.as_ref().map(|t| &t.1),
                "baseline": baseline.as_ref().map(|b| &b.1),
            },
            "files": files,
        }),
    )
}
