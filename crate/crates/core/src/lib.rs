//! Memory-augmented sample-consistency domain adaptation.
//!
//! Source features from past iterations are kept in a FIFO [`bank::MemoryBank`].
//! Each target feature receives a kNN pseudo-label from the bank and is
//! pulled toward bank entries of that class by a contrastive consistency
//! loss, alongside a conditional adversarial alignment term.

pub mod bank;
pub mod data;
pub mod error;
pub mod exec;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod similarity;
pub mod trainer;

pub use error::{Error, Result};
pub use exec::Execution;
pub use trainer::{run_training, run_training_exec, TrainConfig, TrainOutcome, Trainer};
