//! Experiment orchestration, output files and the command-line front end.

mod cli;
mod config;
mod experiment;
mod sweep;
mod trace;

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use cli::{cli_main, cli_main_with};
pub use config::{parse_override, set_path, ExperimentConfig, PayloadSet, SweepParameter, SweepSpec};
pub use experiment::{run_experiment, simulate_experiment, ExperimentOutcome, TrialOutcome, REPORTS_FILE, STATS_FILE};
pub use sweep::{run_sweep, simulate_sweep, SweepOutcome, SweepRow, SWEEP_FILE};
pub use trace::{emit_trace, render_trace};

use crate::channel::ChannelError;
use crate::codec::CodecError;
use crate::decoder::DecodeError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("cannot draw trace: {0}")]
    Trace(String),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit code: 2 for I/O failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Io { .. } => 2,
            _ => 1,
        }
    }
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}
