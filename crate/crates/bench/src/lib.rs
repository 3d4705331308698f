//! Experiment runner for the oranguide pipeline: configuration profiles,
//! persisted run records, RPI and distribution statistics, and figure-data
//! CSV emission.

pub mod analysis;
pub mod config;
pub mod error;
pub mod experiment;
pub mod record;
pub mod report;
pub mod variant;

pub use config::{ExperimentBlock, ExperimentConfig, Profile};
pub use error::BenchError;
pub use experiment::{eval_seed, run_experiment, OutputDir, Runner};
pub use record::RunRecord;
pub use report::{report, ReportOptions, ReportSummary};
pub use variant::VariantId;
