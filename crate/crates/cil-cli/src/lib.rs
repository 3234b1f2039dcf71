//! Command-line front end for the continual-learning engine: experiment
//! configs, run artifacts, reports (CSV + SVG), paired comparisons and a
//! runtime self-test suite.

pub mod artifact;
pub mod compare;
pub mod config;
pub mod report;
pub mod selftest;
pub mod svg;

pub use artifact::{run_experiment, RunArtifact};
pub use config::ExperimentConfig;
