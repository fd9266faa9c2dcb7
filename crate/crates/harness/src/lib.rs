//! Experiment orchestration for the adaptive classical-shadows toolkit:
//! config ingestion, seeded trial fan-out, coverage statistics, estimator
//! comparisons, and the exact-oracle validation suites behind `shadows
//! validate`.

pub mod compare;
pub mod config;
pub mod experiment;
pub mod plan;
pub mod report;
pub mod validate;

pub use config::{ConfigError, ExperimentConfig};
