//! Simulation studies: named null, power and large-model settings, the
//! replication engine and rejection-rate summaries.

mod config;
mod runner;
mod settings;
mod stats;

use thiserror::Error;

pub use config::{parse_config, parse_j, parse_tests, SimConfig};
pub use runner::{
    fit_null, large_model_study, run_replications, write_rates_csv, Comparison, DiscardCause,
    LargeModelRow, LargeModelStudy, RunOptions, SimResult, TestSummary,
};
pub use settings::{
    generate, generate_large_model, generate_null, generate_power, large_model_coefficients,
    power1_coefficients, power3_coefficients, CovariateLaw, DesignShape, SettingId, SettingSpec,
    Simulated, LARGE_MODEL_DIMS,
};
pub use stats::{
    bonferroni, bonferroni_threshold, mcnemar_compare, mcnemar_exact, wilson_ci, McNemarOutcome,
};

use crate::family::FamilyError;
use crate::glm::FitError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown setting `{0}`")]
    UnknownSetting(String),
    #[error("{0} needs a deviation index J")]
    MissingJ(SettingId),
    #[error("J = {j} is not on the grid for {setting}")]
    InvalidJ { setting: SettingId, j: f64 },
    #[error("{0}")]
    InvalidArgument(String),
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
