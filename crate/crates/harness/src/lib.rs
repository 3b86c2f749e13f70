//! Experiment harness: datasets, configs, training runs, exports and reports.

pub mod config;
pub mod data;
pub mod error;
pub mod export;
pub mod pipeline;
pub mod report;
pub mod runner;

pub use config::{GridSpec, MonitorConfig, ReplayFile, RunConfig, ScheduleSpec, Sweep, UpdateRule};
pub use data::{DataSplit, Dataset, DatasetSpec};
pub use error::{HarnessError, Result};
pub use runner::{replay_config, train, EpochMetrics, RunOutcome};
