//! Experiment configuration, the round loop, and metrics files.

mod config;
mod metrics;
mod run;

pub use config::{ExperimentConfig, Policy};
pub use metrics::{
    parse_metrics, read_metrics, render_metrics, write_merged_metrics, write_metrics, MetricsTable, COLUMNS,
};
pub use run::{run_comparison, run_experiment, run_in, Environment, ExperimentRecord, RoundMetrics, Summary};
