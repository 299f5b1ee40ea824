//! Scenario corpus, metrics, ablation grids and run output.

pub mod ablation;
pub mod corpus;
pub mod metrics;
pub mod output;
pub mod replay;

use thiserror::Error;

use crate::detection::log::LogError;
use crate::sim::SimError;
use crate::tracker::TrackerError;

pub use ablation::{format_table, run_ablation, AblationRow, AblationSpec, AblationTable};
pub use metrics::{compute_metrics, Metrics, MetricsConfig, MetricsError};
pub use output::{config_hash, metrics_from_dir, write_run, Summary};
pub use replay::track_log;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Ablation(#[from] ablation::AblationError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error("malformed record: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Whether the failure stems from bad input rather than a run that went wrong.
    pub fn is_config(&self) -> bool {
        match self {
            HarnessError::Config(_) => true,
            HarnessError::Sim(e) => e.is_config(),
            HarnessError::Ablation(ablation::AblationError::Spec(_)) => true,
            HarnessError::Ablation(ablation::AblationError::Run { source, .. }) => source.is_config(),
            HarnessError::Tracker(TrackerError::Config(_)) => true,
            _ => false,
        }
    }
}
