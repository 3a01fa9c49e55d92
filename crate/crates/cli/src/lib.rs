//! Experiment orchestration for the density-of-classifiers lab: config
//! files, the staged pipeline, `report.json` and plot emission.

pub mod config;
pub mod pipeline;
pub mod plot;
pub mod report;

pub use config::{validate_config, ConfigError, ExperimentConfig};
pub use pipeline::{Pipeline, PipelineError, Stage, StageFailure};
pub use report::Report;
