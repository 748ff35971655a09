//! Experiment runner: configuration, seeded Monte Carlo with error bars,
//! analytic-vs-empirical comparisons and CSV/JSON outputs.

pub mod config;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod model;
pub mod report;
pub mod seed;
pub mod stats;

pub use config::Config;
pub use error::{CliError, CliResult};
pub use experiments::{Ctx, Experiment, Overrides};
pub use report::{ExperimentReport, RunManifest};
pub use stats::{empirical_cf, CfEstimate};
