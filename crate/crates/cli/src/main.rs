//! `linflow`: run flow-matching experiments from JSON configs.
//!
//! Exit codes: 0 pass, 1 I/O or other failure, 2 config error, 3 numeric
//! failure (divergence, non-finite values), 4 failed checks or incomplete
//! run, 5 evaluation larger than the assignment-solver budget.

mod artifacts;
mod commands;
mod plot;
mod report;
mod status;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "linflow", version, about = "Flow matching with linear interpolation: train, sample, evaluate, check")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Oracle closed form, derivative identities and Tweedie / Hatsell-Nolte checks. No training.
    Verify {
        /// Check the target of this config instead of the built-in suite.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Probe points per target.
        #[arg(long, default_value_t = 200)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write verify.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the velocity model; writes checkpoint, loss trace and loss plot.
    Train {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate a trained model (or the oracle) with forward Euler.
    Sample {
        config: PathBuf,
        /// Defaults to checkpoint.json in the artifact directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Use the exact velocity field instead of a checkpoint.
        #[arg(long)]
        oracle: bool,
        /// Defaults to eval.n from the config.
        #[arg(long)]
        n: Option<usize>,
        /// Defaults to eval.seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Also write every intermediate state.
        #[arg(long)]
        trajectory: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Error decomposition of a trained model against the target.
    Evaluate {
        config: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lipschitz, moment and tail checks of the exact velocity field.
    Regularity {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Explicit ReLU constructions: clipper, time partition of unity, time approximant.
    Approx {
        /// Numbers of time intervals.
        #[arg(long, value_delimiter = ',', default_values_t = [4, 16, 64])]
        m: Vec<usize>,
        /// Clipping half-width.
        #[arg(long, default_value_t = 3.0)]
        a: f64,
        /// Clipper dimension.
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Every step for each config, run concurrently, then a summary per run.
    Experiment {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        /// Artifact directory (single config only).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarise a finished experiment directory.
    Report {
        dir: PathBuf,
        /// Second run to compare error terms against.
        #[arg(long)]
        compare: Option<PathBuf>,
    },
}

fn run(cmd: Command) -> anyhow::Result<status::Status> {
    match cmd {
        Command::Verify { config, points, seed, out } => commands::verify(config.as_deref(), points, seed, out.as_deref()),
        Command::Train { config, out } => commands::train(&config, out.as_deref()),
        Command::Sample { config, checkpoint, oracle, n, seed, trajectory, out } => {
            let opts = commands::SampleOptions { checkpoint: checkpoint.as_deref(), oracle, n, seed, trajectory };
            commands::sample(&config, &opts, out.as_deref())
        }
        Command::Evaluate { config, checkpoint, out } => commands::evaluate(&config, checkpoint.as_deref(), out.as_deref()),
        Command::Regularity { config, out } => commands::regularity(&config, out.as_deref()),
        Command::Approx { m, a, d, out } => commands::approx(&m, a, d, out.as_deref()),
        Command::Experiment { configs, out } => commands::experiment(&configs, out.as_deref()),
        Command::Report { dir, compare } => commands::report(&dir, compare.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(s) => ExitCode::from(s.code()),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(status::code_for(&e))
        }
    }
}
