//! `vegabook`: reproduce the market-making experiments from a JSON config.

mod cache;
mod commands;
mod config;
mod error;
mod summary;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::SweepAxis;
use config::RunConfig;
use error::Result;

#[derive(Debug, Parser)]
#[command(name = "vegabook", version, about = "Options market-making engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration; defaults reproduce the reference setup.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Root seed (overrides `sim.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Number of simulated days (overrides `sim.n_paths`).
    #[arg(long, global = true)]
    paths: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Implied-volatility surface of the configured book.
    Surface,
    /// Solve the quadratic-inventory system and export fields.
    Solve,
    /// Sweep quotes at zero inventory along S or ν.
    Quotes {
        #[arg(long, value_enum, default_value_t = SweepAxis::Nu)]
        axis: SweepAxis,
    },
    /// Simulate trading days for the configured strategies.
    Compare,
    /// Print the resolved configuration.
    ShowConfig,
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = &cli.out {
        cfg.output.dir = dir.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.sim.seed = seed;
    }
    if let Some(n) = cli.paths {
        cfg.sim.n_paths = n;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve(cli)?;
    match &cli.command {
        Command::Surface => commands::surface_cmd(&cfg),
        Command::Solve => commands::solve_cmd(&cfg),
        Command::Quotes { axis } => commands::quotes_cmd(&cfg, *axis),
        Command::Compare => commands::compare_cmd(&cfg),
        Command::ShowConfig => {
            println!("{}", cfg.to_json());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
