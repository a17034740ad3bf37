//! Experiment harness around `tcq-core`: rate-model fitting, full versus
//! accelerated search sweeps, the exhaustive optimality check and the
//! closed-form statistics table.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod report;

pub use config::{ExperimentConfig, KMode, Overrides, RateModeKind};
pub use error::{BenchError, Result};
pub use experiment::{run_bench, run_fit, run_oracle, run_stats, BenchReport, CellRow, FitReport, OracleReport, StatsReport};
