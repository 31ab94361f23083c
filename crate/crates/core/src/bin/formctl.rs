use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use formctl::cli::{self, SimulateOptions, SweepOptions};
use formctl::riccati::Param;
use formctl::sweep::Quantity;

/// Energy-aware optimal formation control: feasibility checks, simulation and
/// parameter sweeps.
#[derive(Parser)]
#[command(name = "formctl", version)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pre-flight feasibility report (exit 0 feasible, 2 infeasible).
    Check { scenario: PathBuf },
    /// Simulate the closed loop (exit 0 mission succeeded, 3 failed).
    Simulate {
        scenario: PathBuf,
        /// Trajectory CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Summary JSON; printed to stdout when omitted.
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Override the integration step from the scenario file.
        #[arg(long)]
        step: Option<f64>,
    },
    /// Sweep one parameter (exit 0 when monotone in the predicted direction, 4 otherwise).
    Sweep {
        scenario: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(Param))]
        vary: Param,
        /// Tl, El or lambda_min_P.
        #[arg(long, default_value = "Tl")]
        quantity: Quantity,
        /// start:stop:count or log:start:stop:count.
        #[arg(long)]
        grid: Option<String>,
        /// CSV destination; CSV goes to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mode decomposition diagnostics as JSON.
    Modes {
        scenario: PathBuf,
        #[arg(long)]
        step: Option<f64>,
    },
}

fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var("FORMCTL_THREADS") {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .with_context(|| format!("FORMCTL_THREADS={v} is not a count"))?;
            Ok(Some(n.max(1)))
        }
        Err(_) => Ok(None),
    }
}

fn run(args: Args) -> Result<u8> {
    let stdout = io::stdout().lock();
    let code = match args.command {
        Command::Check { scenario } => cli::cmd_check(&scenario, stdout)?,
        Command::Simulate {
            scenario,
            out,
            summary,
            step,
        } => cli::cmd_simulate(&scenario, &SimulateOptions { out, summary, step }, stdout)?,
        Command::Sweep {
            scenario,
            vary,
            quantity,
            grid,
            out,
        } => {
            let options = SweepOptions {
                vary,
                quantity,
                grid,
                out,
                threads: threads_from_env()?,
            };
            cli::cmd_sweep(&scenario, &options, stdout)?
        }
        Command::Modes { scenario, step } => cli::cmd_modes(&scenario, step, stdout)?,
    };
    Ok(code)
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(cli::exit::INPUT)
        }
    }
}
