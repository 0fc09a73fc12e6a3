//! Batch entry points: simulate walks, fit the closed-form rangers, train the
//! neural rangers and evaluate positioning. All outputs are plain text except
//! model checkpoints, and every file starts with a provenance header.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use beaconloc::channel_sim::SimError;
use beaconloc::ranging::{BackendKind, RangingError};
use beaconloc::training::TrainingError;
use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<TrainingError> for CliError {
    fn from(e: TrainingError) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

impl From<RangingError> for CliError {
    fn from(e: RangingError) -> Self {
        TrainingError::from(e).into()
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Validation(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Backend {
    Pathloss,
    Polynomial,
    Cupid,
    Fc,
    Cnn,
}

impl Backend {
    pub fn kind(self) -> BackendKind {
        match self {
            Backend::Pathloss => BackendKind::Pathloss,
            Backend::Polynomial => BackendKind::Polynomial,
            Backend::Cupid => BackendKind::Cupid,
            Backend::Fc => BackendKind::Fc,
            Backend::Cnn => BackendKind::Cnn,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Mode {
    WifiOnly,
    Fused,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::WifiOnly => "wifi_only",
            Mode::Fused => "fused",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "beaconloc", version, about = "Beacon CSI ranging, tracking and unsupervised training")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the calibration, training and test walks of a site.
    Simulate {
        /// Site configuration (TOML); the built-in office when omitted.
        #[arg(long, env = "BEACONLOC_CONFIG")]
        config: Option<PathBuf>,
        /// Overrides the `seed` key of the configuration.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "BEACONLOC_OUT")]
        out: PathBuf,
    },
    /// Fit the path-loss, polynomial and cupid rangers on a labeled walk.
    FitBaselines {
        /// Labeled record file.
        #[arg(long)]
        input: PathBuf,
        /// Require the inputs of one backend, e.g. CSI for cupid.
        #[arg(long, value_enum)]
        backend: Option<Backend>,
        #[arg(long, env = "BEACONLOC_CONFIG")]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "BEACONLOC_OUT")]
        out: PathBuf,
    },
    /// Train a neural ranger on an unlabeled walk.
    Train {
        /// Record file of the training walk.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "cnn")]
        backend: Backend,
        #[arg(long, env = "BEACONLOC_CONFIG")]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Labeled walk scored after every epoch.
        #[arg(long)]
        test: Option<PathBuf>,
        /// Output directory of an earlier run to continue from.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long, env = "BEACONLOC_OUT")]
        out: PathBuf,
    },
    /// Track a walk and, when it is labeled, score the trajectory.
    Evaluate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        backend: Backend,
        #[arg(long, value_enum, default_value = "wifi_only")]
        mode: Mode,
        /// Fitted baseline parameters; built-in values when omitted.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Checkpoint for the fc and cnn backends.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, env = "BEACONLOC_CONFIG")]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "BEACONLOC_OUT")]
        out: PathBuf,
    },
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, seed, out } => commands::simulate(config.as_deref(), seed, &out),
        Command::FitBaselines { input, backend, config, seed, out } => {
            commands::fit_baselines(&input, backend, config.as_deref(), seed, &out)
        }
        Command::Train { input, backend, config, seed, test, resume, out } => commands::train(
            &commands::TrainArgs {
                input: &input,
                backend,
                config: config.as_deref(),
                seed,
                test: test.as_deref(),
                resume: resume.as_deref(),
            },
            &out,
        ),
        Command::Evaluate { input, backend, mode, params, model, config, seed, out } => commands::evaluate(
            &commands::EvaluateArgs {
                input: &input,
                backend,
                mode,
                params: params.as_deref(),
                model: model.as_deref(),
                config: config.as_deref(),
                seed,
            },
            &out,
        ),
    }
}
