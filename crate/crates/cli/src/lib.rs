//! Batch front end: reads a TOML run configuration and a CSV sample, runs
//! the estimation and policy pipeline, and writes CSV outputs.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod data;
mod error;
pub mod output;

pub use config::RunConfig;
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "shapemmr",
    version,
    about = "Minimax-regret treatment assignment with shape restrictions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bounds on the mean response and utility at every treatment level.
    Bounds(DataArgs),
    /// Worst-case regret matrix and the regret-minimizing policy.
    Solve(DataArgs),
    /// Regret-gap Monte Carlo on a synthetic design.
    Simulate(CommonArgs),
    /// First-stage estimates and their shape-consistent repair.
    Project(DataArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Random seed (overrides `seed`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to one per core.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub data: PathBuf,
}

fn output_dir(cfg: &RunConfig, args: &CommonArgs) -> CliResult<PathBuf> {
    let dir = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn execute(command: &Command) -> CliResult<Vec<String>> {
    let common = match command {
        Command::Bounds(a) | Command::Solve(a) | Command::Project(a) => &a.common,
        Command::Simulate(c) => c,
    };
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let mut lines = Vec::new();
    let files = match command {
        Command::Bounds(a) => {
            let rows = data::load(&a.data)?;
            commands::cmd_bounds(&cfg, rows, &output_dir(&cfg, common)?)?
        }
        Command::Solve(a) => {
            let rows = data::load(&a.data)?;
            commands::cmd_solve(&cfg, rows, &output_dir(&cfg, common)?)?
        }
        Command::Project(a) => {
            let rows = data::load(&a.data)?;
            let (files, summary) = commands::cmd_project(&cfg, rows, &output_dir(&cfg, common)?)?;
            lines.push(summary);
            files
        }
        Command::Simulate(_) => {
            let (files, summary) = commands::cmd_simulate(&cfg, &output_dir(&cfg, common)?)?;
            lines.push(summary);
            files
        }
    };
    lines.extend(files.iter().map(|f| format!("wrote {}", f.display())));
    Ok(lines)
}

/// Runs a parsed command line on the requested thread pool.
pub fn run(cli: &Cli) -> CliResult<Vec<String>> {
    let threads = match &cli.command {
        Command::Bounds(a) | Command::Solve(a) | Command::Project(a) => a.common.threads,
        Command::Simulate(c) => c.threads,
    };
    match threads {
        Some(0) => Err(CliError::Validation("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
            pool.install(|| execute(&cli.command))
        }
        None => execute(&cli.command),
    }
}
