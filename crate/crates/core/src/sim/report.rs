//! CSV emission of simulation reports.

use std::io::{self, Write};

use super::experiment::SimReport;

/// `bucket_start,bucket_end,strategy,mean,stderr,n_requests`
pub fn write_per_request_pnl<W: Write>(mut w: W, reports: &[SimReport]) -> io::Result<()> {
    writeln!(w, "bucket_start,bucket_end,strategy,mean,stderr,n_requests")?;
    for r in reports {
        for b in &r.buckets {
            writeln!(w, "{},{},{},{},{},{}", b.start, b.end, r.strategy, b.mean, b.stderr, b.n_requests)?;
        }
    }
    Ok(())
}

/// `strategy,pnl,cdf`
pub fn write_pnl_cdf<W: Write>(mut w: W, reports: &[SimReport]) -> io::Result<()> {
    writeln!(w, "strategy,pnl,cdf")?;
    for r in reports {
        for (x, c) in r.pnl_cdf() {
            writeln!(w, "{},{x},{c}", r.strategy)?;
        }
    }
    Ok(())
}

/// `path,option,t,vega`
pub fn write_vega_paths<W: Write>(mut w: W, report: &SimReport) -> io::Result<()> {
    writeln!(w, "path,option,t,vega")?;
    for v in &report.vega_paths {
        writeln!(w, "{},{},{},{}", v.path, v.option, v.t, v.vega)?;
    }
    Ok(())
}

/// `path,t,option,side,size,delta_quote`
pub fn write_trades<W: Write>(mut w: W, report: &SimReport) -> io::Result<()> {
    writeln!(w, "path,t,option,side,size,delta_quote")?;
    for t in &report.trades {
        writeln!(w, "{},{},{},{},{},{}", t.path, t.t, t.option, t.side, t.size, t.delta_quote)?;
    }
    Ok(())
}

/// Empirical quantile (linear interpolation between order statistics).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let k = pos.floor() as usize;
    let w = pos - k as f64;
    if k + 1 < sorted.len() {
        sorted[k] * (1.0 - w) + sorted[k + 1] * w
    } else {
        sorted[k]
    }
}
