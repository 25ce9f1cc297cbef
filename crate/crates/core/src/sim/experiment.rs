//! One trading day per path for each strategy, with shared random numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::accounting::{build_tape, penalty_rate, MarketTape, PathState, PRICING_NU_FLOOR};
use super::rfq::{accept, candidate, RfqDraw};
use super::underlying::{simulate_underlying, UnderlyingPath};
use super::{SimConfig, StrategyKind};
use crate::baseline::BaselineFields;
use crate::hamiltonian::Side;
use crate::market::{BookSpec, CorrelationStructure, HestonJumpParams};
use crate::pricing::{GreeksBundle, HestonPricer};
use crate::theta::{quote_from_components, Components, QuoteResult, ThetaFields};
use crate::{Error, Result};

/// Market and book shared by every strategy in an experiment.
#[derive(Debug, Clone)]
pub struct Market {
    pub params: Vec<HestonJumpParams>,
    pub corr: CorrelationStructure,
    pub book: BookSpec,
    /// Risk aversion used in the running penalty of the objective.
    pub gamma: f64,
}

/// A quoting rule driven by solved fields.
#[derive(Debug, Clone, Copy)]
pub enum Strategy<'a> {
    Theta(&'a ThetaFields),
    Baseline(&'a BaselineFields),
    /// Quote the same spread on every request (reference rule).
    Constant(f64),
}

impl Strategy<'_> {
    pub fn kind(&self) -> StrategyKind {
        match self {
            Strategy::Theta(_) => StrategyKind::Theta,
            Strategy::Baseline(_) => StrategyKind::Baseline,
            Strategy::Constant(_) => StrategyKind::Constant,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TradeRecord {
    pub path: usize,
    pub t: f64,
    pub option: usize,
    pub side: Side,
    pub size: f64,
    pub delta_quote: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VegaSample {
    pub path: usize,
    pub option: usize,
    pub t: f64,
    pub vega: f64,
}

/// Result of one strategy on one path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathOutcome {
    pub bucket_pnl: Vec<f64>,
    pub bucket_requests: Vec<usize>,
    pub terminal_pnl: f64,
    pub penalty: f64,
    /// `[bid, ask]` fills per option.
    pub fills: Vec<[usize; 2]>,
    pub requests: Vec<usize>,
    pub trades: Vec<TradeRecord>,
    pub final_inventory: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketStat {
    pub start: f64,
    pub end: f64,
    /// Total PnL over total requests in the bucket, across paths.
    pub mean: f64,
    pub stderr: f64,
    pub n_requests: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub strategy: StrategyKind,
    pub buckets: Vec<BucketStat>,
    /// Terminal PnL per path, in path order.
    pub terminal_pnl: Vec<f64>,
    pub mean_pnl: f64,
    pub stderr_pnl: f64,
    /// Mean of terminal PnL minus the running inventory penalty.
    pub objective: f64,
    pub fills: Vec<[usize; 2]>,
    pub requests: Vec<usize>,
    pub trades: Vec<TradeRecord>,
    pub vega_paths: Vec<VegaSample>,
}

impl SimReport {
    /// Sorted terminal PnL with empirical CDF levels `k/n`.
    pub fn pnl_cdf(&self) -> Vec<(f64, f64)> {
        let mut v = self.terminal_pnl.clone();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        v.into_iter().enumerate().map(|(k, x)| (x, (k + 1) as f64 / n)).collect()
    }
}

/// RNG stream `2·path + k` of the root seed (`k = 0` for the underlying,
/// `k = 1` for requests).
pub fn path_rng(seed: u64, path: usize, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * path as u64 + k);
    rng
}

fn floored(g: &GreeksBundle) -> GreeksBundle {
    let mut out = *g;
    out.vega = out.vega.max(1e-8);
    out
}

/// Run one strategy along a priced path.
#[allow(clippy::too_many_arguments)]
pub fn run_path(
    market: &Market,
    strategy: &Strategy,
    config: &SimConfig,
    path_index: usize,
    path: &UnderlyingPath,
    tape: &MarketTape,
    rng: &mut ChaCha8Rng,
) -> Result<PathOutcome> {
    let book = &market.book;
    let n = book.len();
    let d = path.d;
    let steps = path.steps();
    let dt = config.horizon / steps as f64;
    let nb = config.buckets;
    let mut out = PathOutcome {
        bucket_pnl: vec![0.0; nb],
        bucket_requests: vec![0; nb],
        terminal_pnl: 0.0,
        penalty: 0.0,
        fills: vec![[0, 0]; n],
        requests: vec![0; n],
        trades: Vec::new(),
        final_inventory: Vec::new(),
    };
    let mut st = PathState::new(n, d);
    let mut draws = vec![RfqDraw { arrival: 1.0, accept: 1.0 }; n];
    let mut nu_pos = vec![0.0; d];
    for step in 0..steps {
        let t = path.times[step];
        st.t = t;
        let greeks = tape.at(step);
        let spot = path.spot(step);
        for (o, v) in nu_pos.iter_mut().zip(path.var(step)) {
            *o = v.max(PRICING_NU_FLOOR);
        }
        let bucket = (step * nb / steps).min(nb - 1);
        for dr in draws.iter_mut() {
            *dr = RfqDraw::sample(rng);
        }
        let mut comp: Option<Components> = None;
        for j in 0..n {
            let qp = &book.intensity[j];
            let Some(side) = candidate(&draws[j], qp.bid.lambda_max, qp.ask.lambda_max, dt) else {
                continue;
            };
            out.requests[j] += 1;
            out.bucket_requests[bucket] += 1;
            let g = floored(&greeks[j]);
            let quote: QuoteResult = match strategy {
                Strategy::Theta(f) => {
                    let c = comp.get_or_insert_with(|| f.components(t, spot, &nu_pos));
                    quote_from_components(c, book, &st.q, j, side, &g)
                }
                Strategy::Baseline(f) => {
                    let i = book.options[j].underlying;
                    let v = f.grid.portfolio_vega(&st.q);
                    f.quote(t, nu_pos[i], v, j, side, g.price)
                }
                Strategy::Constant(delta) => Ok(QuoteResult {
                    delta: *delta,
                    price: g.price,
                    increment: 0.0,
                }),
            }
            .map_err(|e| Error::Path {
                path: path_index,
                source: Box::new(e),
            })?;
            if accept(&draws[j], qp.side(side), g.vega, quote.delta)? {
                let z = book.trade_size[j];
                st.apply_fill(j, side, z, quote.delta, greeks[j].price);
                out.fills[j][(side == Side::Ask) as usize] += 1;
                if config.record_trades {
                    out.trades.push(TradeRecord {
                        path: path_index,
                        t,
                        option: j,
                        side,
                        size: z,
                        delta_quote: quote.delta,
                    });
                }
            }
        }
        let before = st.mtm;
        st.accounting_step(book, spot, greeks);
        out.penalty += penalty_rate(market.gamma, &market.params, &market.corr.sigma_nu, book, &st.q, greeks) * dt;
        let after = st.mark(path.spot(step + 1), tape.at(step + 1));
        out.bucket_pnl[bucket] += after - before;
    }
    out.terminal_pnl = st.mtm;
    out.final_inventory = st.q;
    Ok(out)
}

/// Vega samples of one path.
fn sample_vegas(config: &SimConfig, path_index: usize, path: &UnderlyingPath, tape: &MarketTape) -> Vec<VegaSample> {
    if path_index >= config.vega_sample_paths {
        return Vec::new();
    }
    let mut out = Vec::new();
    for step in (0..=path.steps()).step_by(config.vega_sample_stride.max(1)) {
        for (j, g) in tape.at(step).iter().enumerate() {
            out.push(VegaSample {
                path: path_index,
                option: j,
                t: path.times[step],
                vega: g.vega,
            });
        }
    }
    out
}

/// Ratio estimator of PnL per request with a delta-method standard error.
fn bucket_stats(outcomes: &[&PathOutcome], nb: usize, horizon: f64) -> Vec<BucketStat> {
    let p = outcomes.len() as f64;
    (0..nb)
        .map(|b| {
            let x: Vec<f64> = outcomes.iter().map(|o| o.bucket_pnl[b]).collect();
            let r: Vec<f64> = outcomes.iter().map(|o| o.bucket_requests[b] as f64).collect();
            let (sx, sr): (f64, f64) = (x.iter().sum(), r.iter().sum());
            let mean = if sr > 0.0 { sx / sr } else { 0.0 };
            let stderr = if sr > 0.0 && p > 1.0 {
                let rbar = sr / p;
                let ss: f64 = x.iter().zip(&r).map(|(xi, ri)| (xi - mean * ri).powi(2)).sum();
                (ss / (p * (p - 1.0))).sqrt() / rbar
            } else {
                0.0
            };
            BucketStat {
                start: horizon * b as f64 / nb as f64,
                end: horizon * (b + 1) as f64 / nb as f64,
                mean,
                stderr,
                n_requests: sr as usize,
            }
        })
        .collect()
}

fn merge(kind: StrategyKind, outcomes: &[&PathOutcome], vega_paths: Vec<VegaSample>, config: &SimConfig) -> SimReport {
    let n = outcomes.first().map_or(0, |o| o.fills.len());
    let p = outcomes.len() as f64;
    let terminal_pnl: Vec<f64> = outcomes.iter().map(|o| o.terminal_pnl).collect();
    let mean_pnl = terminal_pnl.iter().sum::<f64>() / p;
    let var = terminal_pnl.iter().map(|x| (x - mean_pnl).powi(2)).sum::<f64>() / (p - 1.0).max(1.0);
    let penalty = outcomes.iter().map(|o| o.penalty).sum::<f64>() / p;
    let mut fills = vec![[0usize; 2]; n];
    let mut requests = vec![0usize; n];
    let mut trades = Vec::new();
    for o in outcomes {
        for j in 0..n {
            fills[j][0] += o.fills[j][0];
            fills[j][1] += o.fills[j][1];
            requests[j] += o.requests[j];
        }
        trades.extend_from_slice(&o.trades);
    }
    SimReport {
        strategy: kind,
        buckets: bucket_stats(outcomes, config.buckets, config.horizon),
        terminal_pnl,
        mean_pnl,
        stderr_pnl: (var / p).sqrt(),
        objective: mean_pnl - penalty,
        fills,
        requests,
        trades,
        vega_paths,
    }
}

/// Simulate `config.n_paths` days and run every strategy on each of them
/// with common random numbers. Reports are returned in strategy order.
pub fn run_experiment(market: &Market, strategies: &[Strategy], config: &SimConfig) -> Result<Vec<SimReport>> {
    config.check(&market.book)?;
    if strategies.is_empty() {
        return Err(Error::invalid("experiment: no strategy given"));
    }
    let pricers: Vec<HestonPricer> = market.params.iter().map(HestonPricer::new).collect();
    let per_path = (0..config.n_paths)
        .into_par_iter()
        .map(|pi| {
            let wrap = |e: Error| Error::Path {
                path: pi,
                source: Box::new(e),
            };
            let mut rng = path_rng(config.seed, pi, 0);
            let path = simulate_underlying(&market.params, &market.corr, config.horizon, config.steps, &mut rng)
                .map_err(wrap)?;
            let tape = build_tape(&path, &market.book, &pricers).map_err(wrap)?;
            let outcomes = strategies
                .iter()
                .map(|s| {
                    let mut rng = path_rng(config.seed, pi, 1);
                    run_path(market, s, config, pi, &path, &tape, &mut rng)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((outcomes, sample_vegas(config, pi, &path, &tape)))
        })
        .collect::<Result<Vec<_>>>()?;
    let vegas: Vec<VegaSample> = per_path.iter().flat_map(|(_, v)| v.iter().copied()).collect();
    Ok(strategies
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let outs: Vec<&PathOutcome> = per_path.iter().map(|(o, _)| &o[k]).collect();
            merge(s.kind(), &outs, vegas.clone(), config)
        })
        .collect())
}
