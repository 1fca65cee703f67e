//! Configuration, presets, the training loop, seed sweeps, and tabular
//! certification.

mod certify;
mod config;
mod presets;
mod runner;
mod sweep;

pub use certify::{
    certify_model, certify_theorem, compare_to_target, fit_tabular_bn, CertifyOptions,
    CertifyReport,
};
pub use config::{EnvKind, ExperimentConfig, Parameterization};
pub use presets::{preset, PRESET_NAMES};
pub use runner::{
    build_env, build_model, run_experiment, run_experiment_with_text, MetricRow, RunRecord,
    RunSummary, Trainer, CSV_COLUMNS, EVAL_STATE_CAP,
};
pub use sweep::{aggregate, format_table, mean_std, sweep, sweep_with, AggregateRow, RunFailure, SweepResult};

use thiserror::Error;

use crate::dag::DagError;
use crate::nn::NnError;
use crate::objectives::ObjectiveError;
use crate::rollout::RolloutError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("environment: {0}")]
    Env(String),
    #[error("non-finite loss or gradient at step {step}\n{dump}")]
    NonFiniteLoss { step: usize, dump: String },
    #[error("did not converge after {iterations} iterations (max loss {residual:.3e})")]
    DidNotConverge { iterations: usize, residual: f64 },
    #[error(transparent)]
    Dag(#[from] DagError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
