//! `costeff`: Bayesian cost-effectiveness analysis of two-arm trials with
//! missing data and structural ones in the QALYs.
//!
//! Exit status: 0 on success, 2 for bad input, 3 when outputs were written
//! but some R-hat exceeded the threshold, 1 for output or sampler failures.

mod commands;
mod error;
mod manifest;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Report;
use error::CliError;
use manifest::RunArgs;

#[derive(Parser)]
#[command(name = "costeff", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a trial CSV and print observed counts per time point.
    Validate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        times: Option<PathBuf>,
    },
    /// Fit one or more model families and write draws, diagnostics, DIC,
    /// imputations and the economic evaluation.
    Fit(RunArgs),
    /// Hurdle model under MAR and the four MNAR scenarios.
    Sensitivity(RunArgs),
    /// Refit over a grid of boundary offsets ε.
    EpsilonSweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Refit the hurdle model with a degenerate-Beta spike of each SD, plus
    /// the exact point mass as reference.
    Sigma1Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [1e-4, 1e-5, 1e-6])]
        values: Vec<f64>,
    },
    /// Write a synthetic trial drawn from the hurdle process.
    Simulate {
        /// Synthetic-trial configuration JSON; a built-in example otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Records per arm, overriding the configuration.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        output: PathBuf,
        /// Where to write the matching time-grid JSON.
        #[arg(long)]
        grid_output: Option<PathBuf>,
    },
}

fn finish(report: Report, threshold: f64) -> Result<(), CliError> {
    for line in &report.lines {
        println!("{line}");
    }
    if report.unconverged.is_empty() {
        Ok(())
    } else {
        Err(CliError::Convergence {
            threshold,
            runs: report.unconverged,
        })
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { data, times } => {
            print!("{}", commands::validate(&data, times.as_ref())?);
            Ok(())
        }
        Command::Fit(args) => {
            let m = args.resolve()?;
            finish(commands::fit_all(&m)?, m.rhat_threshold)
        }
        Command::Sensitivity(args) => {
            let m = args.resolve()?;
            finish(commands::sensitivity(&m)?, m.rhat_threshold)
        }
        Command::EpsilonSweep { run, values } => {
            let mut m = run.resolve()?;
            if run.family.is_none() && run.manifest.is_none() {
                m.families = vec![costeff_core::Family::BetaGamma];
            }
            finish(commands::epsilon_sweep(&m, &values)?, m.rhat_threshold)
        }
        Command::Sigma1Sweep { run, values } => {
            let m = run.resolve()?;
            finish(commands::sigma1_sweep(&m, &values)?, m.rhat_threshold)
        }
        Command::Simulate {
            config,
            seed,
            n,
            output,
            grid_output,
        } => commands::simulate(config.as_ref(), seed, n, &output, grid_output.as_ref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
