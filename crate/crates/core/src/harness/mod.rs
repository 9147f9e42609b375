//! Experiment plumbing: random models, recovery trials, metrics, and scaling sweeps.

pub mod experiment;
pub mod generate;
pub mod metrics;
pub mod scaling;

pub use experiment::{run_recovery_experiment, ExperimentConfig, ExperimentReport, Pipeline, RecoveryMetrics, SampleCount};
pub use generate::generate_model;
pub use metrics::{loglog_fit, Confusion};
pub use scaling::{scaling_report, ScalingConfig, ScalingReport};
