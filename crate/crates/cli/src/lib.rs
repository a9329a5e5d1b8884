//! Command-line and HTTP front ends for vizseq.

pub mod commands;
pub mod server;

use std::path::{Path, PathBuf};

use anyhow::Context;
use vizseq::checkpoint::{self, Model};
use vizseq::corpus::Dataset;

pub const CHECKPOINT_ENV: &str = "VIZSEQ_CHECKPOINT";

/// Failure classes, each with its own process exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Checkpoint(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Checkpoint(_) => 3,
        }
    }

    pub fn inner(&self) -> &anyhow::Error {
        match self {
            CliError::Usage(e) | CliError::Data(e) | CliError::Checkpoint(e) => e,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn data_err(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Data(e.into())
}

pub fn usage_err(msg: impl Into<String>) -> CliError {
    CliError::Usage(anyhow::anyhow!(msg.into()))
}

/// Loads a checkpoint, returning it with its content id.
pub fn load_model(path: &Path) -> CliResult<(Model<f32>, String)> {
    let bytes = std::fs::read(path)
        .with_context(|| format!("reading checkpoint {}", path.display()))
        .map_err(CliError::Checkpoint)?;
    let model = checkpoint::from_bytes(&bytes)
        .with_context(|| format!("loading checkpoint {}", path.display()))
        .map_err(CliError::Checkpoint)?;
    Ok((model, checkpoint::checkpoint_id(&bytes)))
}

/// Reads a record array from a `.json` or `.csv` file.
pub fn load_dataset_file(path: &PathBuf) -> CliResult<Dataset> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(CliError::Data)?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ds = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        Dataset::from_csv_str(name, &text)
    } else {
        Dataset::from_json_str(name, &text)
    };
    ds.with_context(|| format!("parsing {}", path.display())).map_err(CliError::Data)
}
