//! Experiment harness for `dsbcd-core`: JSON configs, multi-run orchestration,
//! result tables and text reports.

pub mod config;
pub mod datafile;
pub mod experiment;
pub mod report;
pub mod table;

pub use config::{parse_config, table1_config, ConfigError, ExperimentConfig};
pub use experiment::{rate_fit, run_experiment, AggregateTable, ExperimentOutput, RateFit};
pub use table::{emit_table, parse_table_csv, Format};
