//! `hrt`: train, evaluate and inspect hinge regression trees.
//!
//! Exit codes: 0 success, 1 unexpected failure, 2 configuration error,
//! 3 data error, 4 model/data dimension mismatch, 5 boosting bound violation.

mod commands;
mod config;
mod failure;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::{CsvArgs, HyperArgs};

#[derive(Parser, Debug)]
#[command(name = "hrt", version, about = "Hinge regression trees and HRT-Boost")]
pub struct Cli {
    /// Seed for every random choice made by the command.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Also write a machine-readable JSON report to this path.
    #[arg(long, global = true, value_name = "PATH")]
    pub json: Option<PathBuf>,
    /// JSON file of default values; explicit flags take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Inference FLOPs convention: `two` dot products per split or `diff`.
    #[arg(long, global = true, value_name = "two|diff")]
    pub flops_mode: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Hrt,
    Boost,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    /// Run both variants and keep the better one.
    Best,
    Max,
    Min,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a tree or a boosted ensemble and report training-set metrics.
    Train {
        /// CSV path or synthetic spec `name:n=<N>:sigma=<s>:seed=<k>`.
        data: String,
        kind: ModelKind,
        #[command(flatten)]
        csv: CsvArgs,
        #[command(flatten)]
        hyper: HyperArgs,
        /// Where to write the model file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report per-node optimization details (per-stage for boosting).
        #[arg(long)]
        diagnostics: bool,
        /// Standardize features with training-set statistics.
        #[arg(long)]
        standardize: bool,
    },
    /// Evaluate a saved model on a dataset.
    Eval {
        /// Model file written by `train`.
        model: PathBuf,
        /// CSV path or synthetic spec.
        data: String,
        #[command(flatten)]
        csv: CsvArgs,
    },
    /// Write predictions for a CSV of features.
    Predict {
        /// Model file written by `train`.
        model: PathBuf,
        /// CSV of feature columns. A column named by `--target` is dropped.
        data: String,
        #[command(flatten)]
        csv: CsvArgs,
        /// Predictions CSV path (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare step-size rules over repeated train/test runs.
    AblateStep {
        /// CSV path or synthetic spec.
        data: String,
        /// Comma-separated step sizes; `auto` selects backtracking.
        #[arg(long, value_delimiter = ',')]
        mu: Vec<String>,
        /// Runs per step rule.
        #[arg(long)]
        repeats: Option<usize>,
        #[command(flatten)]
        csv: CsvArgs,
        #[command(flatten)]
        hyper: HyperArgs,
        /// Also print every individual run.
        #[arg(long)]
        diagnostics: bool,
        /// Write the table as CSV to this path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the per-stage risk-reduction bound of a boosted model.
    BoostDiagnose {
        /// Boosted model file written by `train`.
        model: PathBuf,
    },
    /// Optimize the root split once and print its objective trace as CSV.
    TraceNode {
        /// CSV path or synthetic spec.
        data: String,
        /// Hinge variant to optimize.
        #[arg(long, value_enum, default_value = "best")]
        variant: VariantArg,
        #[command(flatten)]
        csv: CsvArgs,
        #[command(flatten)]
        hyper: HyperArgs,
        /// Trace CSV path (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic dataset as CSV.
    Synth {
        /// Synthetic spec `name:n=<N>:sigma=<s>:seed=<k>`.
        spec: String,
        /// CSV path (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    // Exit quietly when piped into `head` and similar.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HRT_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { failure::EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
