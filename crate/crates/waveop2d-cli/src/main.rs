//! `waveop2d <subcommand> --config <path> [--cache-dir <path>] [--out <path>] [--threads N]`
//!
//! Exit status: 0 success, 1 compute failure (or a failed check), 2 invalid configuration.

mod cache;
mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;
use log::error;

use commands::{Cmd, Ctx};
use config::{Invalid, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "waveop2d",
    version,
    about = "Stationary scattering workbench for -Δ + V on the plane"
)]
struct Cli {
    #[arg(value_enum)]
    command: Cmd,
    /// TOML (or .json) run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides [cache] dir.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Overrides [output] dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the per-energy loops (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = RunConfig::load(&cli.config)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Invalid("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    let cache_dir = cli
        .cache_dir
        .or_else(|| cfg.cache.dir.clone())
        .unwrap_or_else(|| "waveop2d-cache".into());
    let out = cli
        .out
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| "waveop2d-out".into());
    let ctx = Ctx {
        hash: cfg.hash(),
        cache: cache::Cache::open(cache_dir)?,
        out,
        cfg,
    };
    log::info!("{} with config {}", cli.command.name(), ctx.hash);
    commands::run(cli.command, &ctx)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let name = cli.command.name();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            error!("{name}: at least one check failed, see the report");
            ExitCode::from(1)
        }
        Err(e) if e.is::<Invalid>() => {
            error!("{e:#}");
            ExitCode::from(2)
        }
        Err(e) => {
            error!("{name}: {e:#}");
            ExitCode::from(1)
        }
    }
}
