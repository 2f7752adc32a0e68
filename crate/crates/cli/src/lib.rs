//! Configuration-driven experiment runner for amplified amplitude
//! estimation: single estimations, query-scaling sweeps and quadrature
//! weights, written as NDJSON/CSV with a manifest.

pub mod config;
pub mod output;
pub mod record;
pub mod run;
pub mod sweep;

pub use config::{load_config, parse_config, ExperimentConfig, FieldError, Mode};
pub use record::{ErrorRecord, ResultRecord, SweepRow};
pub use run::{execute, RunError, RunOutput};
