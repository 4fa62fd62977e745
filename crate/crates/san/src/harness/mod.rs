//! Experiment orchestration: configuration files, training runs, metrics
//! CSVs, and grid sweeps.

pub mod config;
pub mod metrics;
pub mod run;
pub mod sweep;

pub use config::{DataSource, FullConfig, RunConfig, SweepSpec};
pub use metrics::MetricsRow;
pub use run::{
    accuracy_report, evaluate, export_embeddings, prepare_data, run_experiment, EvalReport,
    PreparedData, TrainOutcome,
};
pub use sweep::{run_sweep, SweepCellResult};
