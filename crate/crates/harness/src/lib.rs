//! Benchmark driver for the saddle-point solvers: configuration parsing,
//! seeded sweeps with CSV output, rate-slope fitting and the acceptance
//! gates as runnable suites.

pub mod config;
pub mod error;
pub mod gates;
pub mod scenario;
pub mod slope;

pub use config::{parse_config, parse_config_str, ExperimentConfig, Scenario, Tuning};
pub use error::{HarnessError, Result};
pub use scenario::{gate_summary, run_scenario, SweepSummary};
pub use slope::fit_rate_slope;
