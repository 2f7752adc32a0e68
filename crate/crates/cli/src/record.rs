//! Output record types.

use std::collections::BTreeMap;

use aae_core::Error;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

/// One estimation. `wall_clock_seconds` is written to a separate timings
/// file so record files stay byte-identical across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub experiment_id: String,
    pub mode: String,
    pub method: String,
    pub estimate: f64,
    pub true_value: Option<f64>,
    pub abs_error: Option<f64>,
    pub target_epsilon: Option<f64>,
    pub queries: BTreeMap<String, u64>,
    pub repetitions: u64,
    pub seed: u64,
    pub version: String,
    pub details: Value,
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

impl ResultRecord {
    pub fn new(experiment_id: &str, mode: &str, method: &str, estimate: f64, true_value: Option<f64>, seed: u64) -> Self {
        Self {
            experiment_id: experiment_id.to_string(),
            mode: mode.to_string(),
            method: method.to_string(),
            estimate,
            true_value,
            abs_error: true_value.map(|t| (estimate - t).abs()),
            target_epsilon: None,
            queries: BTreeMap::new(),
            repetitions: 0,
            seed,
            version: VERSION.to_string(),
            details: Value::Null,
            wall_clock_seconds: 0.0,
        }
    }

    pub fn total_queries(&self) -> u64 {
        self.queries.values().sum()
    }
}

/// A failed pipeline, written in place of result records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub experiment_id: String,
    pub mode: String,
    pub kind: String,
    pub message: String,
    pub details: Value,
    pub seed: u64,
    pub version: String,
}

impl ErrorRecord {
    pub fn from_error(experiment_id: &str, mode: &str, seed: u64, err: &Error) -> Self {
        let (kind, details) = match err {
            Error::PriorViolation {
                estimate,
                p0,
                group,
                node,
            } => (
                "prior_violation",
                json!({"estimate": estimate, "p0": p0, "group": group, "node": node}),
            ),
            Error::GapCollapse { x, gap } => ("gap_collapse", json!({"x": x, "gap": gap})),
            Error::Degenerate { gap, threshold } => ("degenerate", json!({"gap": gap, "threshold": threshold})),
            Error::Overlap { overlap } => ("overlap", json!({"overlap": overlap})),
            Error::NonAnalytic(_) => ("non_analytic", Value::Null),
            Error::Range(_) => ("range", Value::Null),
            Error::Shape(_) => ("shape", Value::Null),
            Error::Argument(_) => ("argument", Value::Null),
            Error::Resource(_) => ("resource", Value::Null),
            Error::Contract(_) => ("contract", Value::Null),
        };
        Self {
            experiment_id: experiment_id.to_string(),
            mode: mode.to_string(),
            kind: kind.to_string(),
            message: err.to_string(),
            details,
            seed,
            version: VERSION.to_string(),
        }
    }
}

/// One CSV row of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub method: String,
    pub queries: u64,
    pub abs_error: f64,
    pub seed: u64,
}
