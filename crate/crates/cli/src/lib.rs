//! Command-line pipeline around the `markflow` library: simulate synthetic
//! data, train, sample forecasts, evaluate them and summarise distributions.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{Overrides, RunConfig};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const VALIDATION: i32 = 1;
    pub const NUMERICAL: i32 = 2;
}

#[derive(Debug, Parser)]
#[command(name = "markflow", version, about = "Flow-matching forecasts for marked event sequences")]
pub struct Cli {
    /// JSON run configuration; defaults are used for anything missing.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random stream (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Forecast horizon L (overrides the config).
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    /// Sampler steps S (overrides the config).
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a synthetic dataset.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "train")]
        split: Split,
        /// Number of sequences (default from the config).
        #[arg(long)]
        count: Option<usize>,
    },
    /// Train a model and write a checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Loss trace CSV (default: `<out>.loss.csv`).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Generate forecasts for every window of a dataset.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the true targets, aligned with the predictions.
        #[arg(long)]
        truth_out: Option<PathBuf>,
    },
    /// Score predictions against truth.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Inter-event time histograms and mark frequencies as CSV.
    Hist {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Dataset whose 99th percentile fixes the bin range.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full pipeline over one or more seeds.
    Run {
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

pub fn execute(cli: &Cli) -> Result<()> {
    let overrides = Overrides {
        seed: cli.seed,
        horizon: cli.horizon,
        steps: cli.steps,
    };
    let cfg = RunConfig::load(cli.config.as_deref(), overrides)?;
    match &cli.command {
        Command::Simulate { out, split, count } => {
            let (idx, default) = match split {
                Split::Train => (0, cfg.data.train_sequences),
                Split::Test => (1, cfg.data.test_sequences),
            };
            commands::simulate(&cfg, idx, count.unwrap_or(default), out)
        }
        Command::Train { data, out, trace } => {
            let trace = trace.clone().unwrap_or_else(|| {
                let mut p = out.clone().into_os_string();
                p.push(".loss.csv");
                p.into()
            });
            commands::train_model(&cfg, data, out, &trace).map(|_| ())
        }
        Command::Sample {
            checkpoint,
            data,
            out,
            truth_out,
        } => commands::sample(&cfg, checkpoint, data, out, truth_out.as_deref()).map(|_| ()),
        Command::Evaluate { pred, truth, out } => commands::evaluate(&cfg, pred, truth, out).map(|_| ()),
        Command::Hist {
            inputs,
            reference,
            out,
        } => commands::hist(inputs, reference.as_deref(), out).map(|_| ()),
        Command::Run { seeds, out } => commands::run(&cfg, *seeds, out).map(|_| ()),
    }
}

/// Exit code for a failed command: numerical aborts are told apart from
/// everything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let numerical = err
        .chain()
        .any(|e| e.downcast_ref::<markflow::Error>().is_some_and(markflow::Error::is_numerical));
    if numerical {
        exit::NUMERICAL
    } else {
        exit::VALIDATION
    }
}
