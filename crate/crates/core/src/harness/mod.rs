//! Experiment configs, runners, reports and plots behind the command line.

pub mod config;
pub mod experiments;
pub mod report;
pub mod svg;

pub use config::ExperimentConfig;
pub use experiments::run_experiment;
pub use report::ExperimentReport;
