// Copyright 2026 The quditcal Authors
// SPDX-License-Identifier: Apache-2.0

//! `quditcal`: gate synthesis, noise sampling, training, evaluation and
//! estimation-noise sweeps, each writing CSV tables and a `manifest.json`
//! into its own output directory.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 non-convergence.

mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use quditcal::agents::Algorithm;
use quditcal::dynamics::Gate;
use quditcal::eval::SweepAxis;
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "quditcal", version, about = "Two-qutrit CZ3 synthesis and RL calibration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, Default)]
pub struct Common {
    /// JSON run configuration; omitted fields take their defaults.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Target gate, overriding the configuration.
    #[arg(long)]
    pub gate: Option<Gate>,
    /// Output directory (default: `<output_dir>/<command>`).
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
pub enum Command {
    /// Optimize the nominal pulse; writes oct_pulse.json and grape_history.csv.
    Grape {
        #[command(flatten)]
        common: Common,
        /// Exit 0 even when the target infidelity was not reached.
        #[arg(long)]
        allow_unconverged: bool,
    },
    /// Draw device offsets; writes noise_samples.csv and noise_hist.csv.
    SampleNoise {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Train one agent; writes learning_curve.csv, episodes.csv and checkpoints.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "td3")]
        algorithm: Algorithm,
        /// Optimized pulse from `grape`; re-optimized when omitted.
        #[arg(long)]
        pulse: Option<PathBuf>,
        /// Total environment steps, overriding the configuration.
        #[arg(long)]
        steps: Option<usize>,
        /// Synthesize the whole pulse on the nominal device instead of a residual.
        #[arg(long)]
        direct: bool,
        /// Continue from a training checkpoint directory.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate the optimized pulse and trained policies on the nominal
    /// device, the static-noise device and a held-out ensemble.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pulse: Option<PathBuf>,
        /// Policy checkpoint directories (repeatable).
        #[arg(long)]
        checkpoint: Vec<PathBuf>,
        /// Ensemble size, overriding the configuration.
        #[arg(long)]
        m: Option<usize>,
    },
    /// Ensemble fidelity versus relative estimation noise on one axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pulse: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "omega")]
        axis: SweepAxis,
        /// Comma-separated relative levels η/σ (default from configuration).
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
        /// Use the extended level set.
        #[arg(long)]
        extended: bool,
        #[arg(long)]
        m: Option<usize>,
    },
    /// Re-run the command recorded in a manifest into a new directory.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run::execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
