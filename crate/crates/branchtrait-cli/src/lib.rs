//! Experiment harness: TOML configuration, dataset generation, estimator
//! runs, replication studies and ergodicity diagnostics.

pub mod config;
pub mod error;
pub mod run;
pub mod study;

pub use config::ExperimentConfig;
pub use error::HarnessError;
pub use run::{run_diagnose, run_estimate, run_simulate, Manifest, Which};
pub use study::{finish_study, run_study, study, study_with, StudyReport};
