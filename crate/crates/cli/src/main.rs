//! `gabor-fio`: experiments on Gabor-frame discretizations of Fourier
//! integral operators, driven by a single TOML config.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gabor_fio::FioError;

use crate::config::ExperimentConfig;

#[derive(Parser, Debug)]
#[command(name = "gabor-fio", version, about = "Gabor-matrix experiments for Fourier integral operators")]
struct Cli {
    /// Experiment config (TOML). Built-in defaults when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `output_dir`.
    #[arg(short, long, global = true)]
    output_dir: Option<PathBuf>,
    /// Overrides `epsilon`.
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, PartialEq, Eq)]
pub enum Command {
    /// STFT magnitude of the input function.
    Stft,
    /// Dual and tight windows with frame bounds.
    Frame,
    /// Gabor matrix by both routes and their difference.
    GaborMatrix,
    /// Decay of the Gabor matrix away from the graph of the canonical map.
    Decay,
    /// Schur sums, plain, weighted and nested.
    Schur,
    /// Modulation-space norms over the dilated-Gaussian family.
    Modnorm,
    /// Norm ratios of chirp multiplication over the family.
    ChirpDemo,
    /// Norm ratios of the Fourier-side chirp multiplier over the family.
    MultiplierDemo,
    /// Quadratic-Hamiltonian Schrödinger evolution of the input.
    Schrodinger,
    /// The acceptance suite.
    Selftest {
        /// Run only these criteria (1 to 9).
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Stft => "stft",
            Command::Frame => "frame",
            Command::GaborMatrix => "gabor-matrix",
            Command::Decay => "decay",
            Command::Schur => "schur",
            Command::Modnorm => "modnorm",
            Command::ChirpDemo => "chirp-demo",
            Command::MultiplierDemo => "multiplier-demo",
            Command::Schrodinger => "schrodinger",
            Command::Selftest { .. } => "selftest",
        }
    }
}

/// A failure with its exit status.
pub struct Failure {
    pub code: u8,
    pub kind: String,
    pub message: String,
}

impl From<FioError> for Failure {
    fn from(e: FioError) -> Self {
        let code = match &e {
            FioError::Parse(_)
            | FioError::UnknownName(_)
            | FioError::InvalidGrid(_)
            | FioError::InvalidLattice(_)
            | FioError::OffLattice { .. }
            | FioError::ShapeMismatch { .. }
            | FioError::GridMismatch(_)
            | FioError::SideMismatch { .. }
            | FioError::Io(_)
            | FioError::Json(_) => 2,
            FioError::Caustic { .. } | FioError::Singular(_) | FioError::NonRepresentableDilation(_) => 4,
            _ => 3,
        };
        Failure { code, kind: e.kind().to_string(), message: e.to_string() }
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig, FioError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(dir) = &cli.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(e) = cli.epsilon {
        cfg.epsilon = e;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load(&cli)
        .and_then(|c| c.validate())
        .map_err(|e| {
            // everything before computation starts is a config error
            let mut f = Failure::from(e);
            f.code = 2;
            f
        })
        .and_then(|exp| commands::run(cli.command, &exp));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let err = serde_json::json!({ "error": f.kind, "message": f.message, "exit_code": f.code });
            eprintln!("{err}");
            ExitCode::from(f.code)
        }
    }
}
