mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{resolve, Overrides};

#[derive(Parser)]
#[command(name = "sop", about = "socket-and-plug forecast calibration", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// Every subcommand takes the same config surface (file plus flag
/// overrides) and an output directory; a few add run-directory inputs.
#[derive(Args)]
struct CmdArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Directory the command writes its artifacts into
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset and write it as CSV
    Synth(CmdArgs),
    /// Train a forecaster and freeze it as a socket directory
    TrainSocket(CmdArgs),
    /// Export a frozen socket's predictions as a standalone bundle
    PredictSocket(CmdArgs),
    /// Fit plugs on a frozen socket's predictions
    Calibrate(CmdArgs),
    /// Score a calibration run on the test split
    Eval {
        #[command(flatten)]
        overrides: Overrides,
        /// Calibration run directory to score
        #[arg(long)]
        run: PathBuf,
        /// Where to write metrics (defaults to the run directory)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit the full report bundle for a calibration run
    Report {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Apply a run's plugs to a different socket's predictions
    Transfer {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        run: PathBuf,
        /// Socket or prediction directory to transfer onto
        #[arg(long)]
        to_socket: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Calibrate the same socket at several plug counts
    Sweep {
        #[command(flatten)]
        overrides: Overrides,
        /// Comma-separated plug counts, one run each
        #[arg(long, value_delimiter = ',', required = true)]
        counts: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> sop_core::error::Result<()> {
    match cli.cmd {
        Cmd::Synth(a) => commands::synth(&resolve(&a.overrides)?, &a.out),
        Cmd::TrainSocket(a) => commands::train_socket_cmd(&resolve(&a.overrides)?, &a.out),
        Cmd::PredictSocket(a) => commands::predict_socket(&resolve(&a.overrides)?, &a.out),
        Cmd::Calibrate(a) => commands::calibrate_cmd(&resolve(&a.overrides)?, &a.out),
        Cmd::Eval { overrides, run, out } => {
            commands::eval_cmd(&resolve(&overrides)?, &run, out.as_deref())
        }
        Cmd::Report { overrides, run, out } => {
            commands::report_cmd(&resolve(&overrides)?, &run, out.as_deref())
        }
        Cmd::Transfer { overrides, run, to_socket, out } => {
            commands::transfer_cmd(&resolve(&overrides)?, &run, &to_socket, out.as_deref())
        }
        Cmd::Sweep { overrides, counts, out } => {
            commands::sweep(&resolve(&overrides)?, &counts, &out)
        }
    }
}

fn main() -> ExitCode {
    // clap itself exits 2 on unknown flags/subcommands, matching the
    // usage-error convention below.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sop: {e}");
            if e.is_usage() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
