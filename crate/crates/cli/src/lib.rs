//! Experiment driver behind the `memsac` binary: configuration files,
//! training runs with their on-disk reports, and ablation sweeps.

pub mod ablate;
pub mod config;
pub mod run;

pub use config::{DataConfig, RunConfig};
pub use run::{train_to_dir, Summary, CSV_HEADER};
