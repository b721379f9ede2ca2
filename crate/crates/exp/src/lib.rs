//! Monte-Carlo experiment driver: TOML configs in, CSV artifacts out.

pub mod config;
pub mod plot;
pub mod runner;
pub mod simulate;

pub use config::{load_config, Algorithm, ConfigError, ExperimentConfig};
pub use plot::{emit_plot_data, Figure};
pub use runner::{run_experiment, write_outputs, AggregateRow, ExperimentOutput, ResultRow};
