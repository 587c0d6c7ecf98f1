//! Experiment statistics on disk, and the aggregation and plotting tools that
//! read them back.

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

mod aggregate;
mod compare;
mod log;
mod plot;

pub use aggregate::{aggregate, metric_value, Band, CurvePoint, GroupCurve, Metric, RunGroup, RunSet};
pub use compare::{compare_against_baseline, load_logs, ComparisonRow, FINAL_FRACTION};
pub use log::{ExperimentLog, IterationStatistics, LogHeader, LogWriter, PhaseStatistics, LOG_FILE, LOG_MAGIC};
pub use plot::{plot, render_csv, render_svg, PlotFormat};

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: corrupt log: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("{path}: expected iteration {expected}, found {found}")]
    Gap { path: PathBuf, expected: u64, found: u64 },
    #[error("{0}")]
    Mismatch(String),
    #[error("could not encode record: {0}")]
    Encode(String),
    #[error("group `{0}` has no runs")]
    EmptyGroup(String),
    #[error("nothing to plot")]
    NoGroups,
    #[error("{path}: iteration {iteration} has no evaluation phase")]
    NoEval { path: PathBuf, iteration: u64 },
    #[error("{0}")]
    Usage(String),
}

impl TelemetryError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        TelemetryError::Io { path: path.to_path_buf(), source }
    }
}
