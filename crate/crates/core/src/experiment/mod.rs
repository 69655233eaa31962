//! Experiment matrix runner, result bundles and the controlled-profile
//! validation scenario.
//!
//! A bundle directory holds:
//!
//! ```text
//! bundle.json       run summary
//! sessions.csv/json one row per session, canonical order
//! aggregates.csv/json one row per (profile, algorithm, b_max) cell
//! logs/<profile>/<algorithm>/bmax-<b>/<trace>.csv/.json
//! plot/<metric>.csv written by `emit_plot_data`
//! ```

mod config;
mod plot;
mod run;
mod validate;

pub use config::{
    derive_seed, AlgorithmConfig, ExperimentConfig, LadderConfig, Prepared, ProfileConfig,
    ResolvedProfile, SyntheticProfile, TraceEntry, SCHEMA_VERSION,
};
pub use plot::emit_plot_data;
pub use run::{
    aggregate_cells, recompute_aggregates, run_matrix, AggregateCell, BundleSummary, RunOutcome,
    SessionRow,
};
pub use validate::{
    validate_fig3, write_validation, CheckResult, ClassRun, SeriesRow, ValidateConfig, Validation,
    ValidationReport,
};

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::abr::AbrError;
use crate::engine::EngineError;
use crate::metrics::MetricsError;
use crate::trace::TraceError;
use crate::video::VideoError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
    #[error("format: {0}")]
    Format(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Video(#[from] VideoError),
    #[error(transparent)]
    Abr(#[from] AbrError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl ExperimentError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        }
    }
}

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const STRUCTURAL: i32 = 1;
    pub const FLAGGED: i32 = 2;
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| ExperimentError::io(path, e))
}
