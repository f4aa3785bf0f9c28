//! Library side of the `sfdm` command: configuration, the commands
//! themselves, and their error type. The binary is a thin argument parser
//! over these functions.

mod commands;
mod config;
mod mask;

use std::fmt;

use sfdm_core::numerics::NumericsError;
use sfdm_core::{DiffusionError, ModelError, SamplingError, TextError, TrainError};

pub use commands::{
    eval, generate, grad_check, inpaint, load_corpus, noise_sim, train, Corpus, GenerateOptions, InpaintOptions,
    TrainOutcome,
};
pub use config::{DataSection, DiffusionSection, ModelSection, RunConfig, TokenizerSection, TrainSection};
pub use mask::parse_mask;

/// Command failure, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration (exit 2).
    Config(String),
    /// Missing or malformed input: files, checkpoints, prompts, masks (exit 2).
    Input(String),
    /// Non-finite values or a failed gradient check (exit 3).
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<NumericsError> for CliError {
    fn from(e: NumericsError) -> Self {
        match e {
            NumericsError::NonFinite(_) => CliError::Numerical(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Numerics(n) => n.into(),
            ModelError::Config(m) => CliError::Config(m),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFinite { .. } => CliError::Numerical(e.to_string()),
            TrainError::Config(m) => CliError::Config(m),
            TrainError::Model(m) => m.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<TextError> for CliError {
    fn from(e: TextError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<DiffusionError> for CliError {
    fn from(e: DiffusionError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<SamplingError> for CliError {
    fn from(e: SamplingError) -> Self {
        match e {
            SamplingError::Model(m) => m.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}
