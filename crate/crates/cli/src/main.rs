//! `gradix`: batch front-end for the graded-index transport solver.
//!
//! Subcommands: `run` (train one configuration and emit reports), `sweep`
//! (ensemble grid), `verify` (self-check suite), `oracle` (closed form vs
//! characteristic integration). Exit codes: 0 ok, 1 verification failure,
//! 2 usage/config error, 3 training abort.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gradix_core::Error;

#[derive(Parser)]
#[command(
    name = "gradix",
    version,
    about = "PINN solver for radiative transfer in graded-index media"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and write run.json, field.csv, loss.csv.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Reduce paper-scale counts to desk scale and halve iteration caps.
        #[arg(long)]
        desk: bool,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (defaults to the config's out_dir or `runs/<case>`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the config's ensemble grid and write leaderboard.csv plus the
    /// best run's artifacts.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        desk: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the property suite and print one pass/fail line per check.
    Verify,
    /// Compare the closed-form solution against the RK4 characteristic
    /// oracle at the points listed in a file (one `x[,y]` per line).
    Oracle {
        #[arg(long)]
        case: String,
        #[arg(long)]
        ke: f64,
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_for(e: &Error) -> u8 {
    match e {
        Error::TrainingAborted(_) | Error::NonFinite { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("GRADIX_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = gradix_core::set_thread_cap(n) {
                    eprintln!("warning: {e}");
                }
            }
            _ => eprintln!("warning: ignoring invalid GRADIX_THREADS={threads}"),
        }
    }
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            config,
            desk,
            seed,
            out,
        } => run_like(&config, desk, seed, out, commands::cmd_run),
        Command::Sweep {
            config,
            desk,
            seed,
            out,
        } => run_like(&config, desk, seed, out, commands::cmd_sweep),
        Command::Verify => return ExitCode::from(commands::cmd_verify() as u8),
        Command::Oracle {
            case,
            ke,
            points,
            out,
        } => {
            let out_dir = out.unwrap_or_else(|| PathBuf::from("."));
            commands::cmd_oracle(&case, ke, &points, &out_dir)
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}

fn run_like(
    config_path: &std::path::Path,
    desk: bool,
    seed: Option<u64>,
    out: Option<PathBuf>,
    f: fn(&config::RunConfig, &std::path::Path) -> gradix_core::Result<()>,
) -> gradix_core::Result<()> {
    let mut cfg = config::RunConfig::load(config_path)?;
    if desk {
        cfg.desk_scale();
    }
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    let out_dir = out
        .or_else(|| cfg.out_dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs").join(&cfg.case));
    f(&cfg, &out_dir)
}
