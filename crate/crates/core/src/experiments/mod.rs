//! Experiment drivers, configuration and report emission.

pub mod config;
pub mod fit;
pub mod rate;
pub mod run;

pub use config::{Datum, ExperimentConfig, ExperimentKind};
pub use fit::{fit_loglog, LogLogFit};
pub use rate::{rate_scan, RateReport, RateSetup};
pub use run::{exit_code_for, run, RunSummary};
