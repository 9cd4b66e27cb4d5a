//! Command-line driver for the multilevel fixed-rank solver.
//!
//! Subcommands: `solve` (one fixed-rank run), `adapt` (rank continuation),
//! `sweep` (level × rank grid), `ls-demo` (the dense quadratic line-search
//! comparison), and `oracle-check` (dense-vs-factored verification).
//!
//! Configuration is a JSON file (`--config`), overridden by dotted-path
//! `--set key=value` flags, with named presets (`--preset`). Runs write
//! `convergence.csv` and `summary.json` under `--out`; both are written
//! atomically so an interrupted run leaves no partial files. Identical
//! configuration and seed reproduce bit-identical metric columns.

mod commands;
mod config;
mod output;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

/// A command failure with its exit status.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or configuration (exit 2).
    Usage(String),
    /// A run or check failed (exit 1).
    Run(String),
}

#[derive(Parser)]
#[command(name = "rmgls", version, about = "Multilevel optimization on fixed-rank manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON configuration file; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted-path override, e.g. `--set cycle.nu1=3` or `--set problem=nonlinear`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory for convergence.csv and summary.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed; overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Named preset: fig-convergence or table-residuals.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the multilevel solver at a fixed rank.
    Solve(RunArgs),
    /// Run the rank-continuation schedule (rank 5 → 25 by default).
    Adapt(RunArgs),
    /// Run a grid of (fine level × rank) cells, one output directory each.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated fine levels, e.g. 7,8,9,10.
        #[arg(long, value_delimiter = ',')]
        levels: Vec<u32>,
        /// Comma-separated ranks, e.g. 5,10.
        #[arg(long, value_delimiter = ',')]
        ranks: Vec<usize>,
    },
    /// Compare weak-Wolfe and approximate-Wolfe line searches on a dense
    /// quadratic problem.
    LsDemo {
        /// Matrix dimension (the problem has n² unknowns).
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// Condition number of the quadratic's SPD matrix.
        #[arg(long, default_value_t = 10.0)]
        cond: f64,
        /// RNG seed for the problem and the starting point.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Line-search acceptance rule: weak or approximate.
        #[arg(long, default_value = "approximate")]
        mode: String,
        /// Output directory for convergence.csv and summary.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify factored computations against dense references at a small level.
    OracleCheck {
        /// Grid level to check (at most 5; the checks are dense).
        #[arg(long, default_value_t = 4)]
        level: u32,
        /// Corrupt a factor first; the orthogonality check must then fail.
        #[arg(long)]
        corrupt: bool,
    },
}

fn resolve_run(args: &RunArgs, want_grid: bool) -> Result<(config::RunConfig, Option<config::SweepGrid>), CliError> {
    let (base, grid) = match args.preset.as_deref() {
        Some(name) => {
            let (base, grid) = commands::load_preset(name)?;
            if grid.is_some() && !want_grid {
                return Err(CliError::Usage(format!(
                    "preset '{name}' describes a sweep; use it with the sweep subcommand"
                )));
            }
            (base, grid)
        }
        None => (config::RunConfig::default(), None),
    };
    let cfg = config::resolve(base, args.config.as_deref(), &args.set, args.seed)
        .map_err(CliError::Usage)?;
    Ok((cfg, grid))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve(args) => {
            let (cfg, _) = resolve_run(&args, false)?;
            commands::solve(&cfg, args.out.as_deref())
        }
        Command::Adapt(args) => {
            let (cfg, _) = resolve_run(&args, false)?;
            commands::adapt(&cfg, args.out.as_deref())
        }
        Command::Sweep { run: args, levels, ranks } => {
            let (cfg, preset_grid) = resolve_run(&args, true)?;
            let mut grid = preset_grid.unwrap_or_else(|| {
                // Without a preset or explicit lists, sweep the standard
                // residuals table: levels 7–10 at ranks 5 and 10.
                config::SweepGrid { levels: vec![7, 8, 9, 10], ranks: vec![5, 10] }
            });
            if !levels.is_empty() {
                grid.levels = levels;
            }
            if !ranks.is_empty() {
                grid.ranks = ranks;
            }
            commands::sweep(&cfg, &grid, args.out.as_deref())
        }
        Command::LsDemo { n, cond, seed, mode, out } => {
            let mode = match mode.as_str() {
                "weak" => config::ModeKind::Weak,
                "approximate" => config::ModeKind::Approximate,
                other => {
                    return Err(CliError::Usage(format!(
                        "unknown line-search mode '{other}' (weak or approximate)"
                    )))
                }
            };
            commands::ls_demo(n, cond, seed, mode, out.as_deref())
        }
        Command::OracleCheck { level, corrupt } => commands::oracle_check(level, corrupt),
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(CliError::Usage(msg)) => {
            eprintln!("rmgls: {msg}");
            std::process::exit(2);
        }
        Err(CliError::Run(msg)) => {
            eprintln!("rmgls: {msg}");
            std::process::exit(1);
        }
    }
}
