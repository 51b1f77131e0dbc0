//! Structured pass/fail records emitted by verification routines and
//! experiments.

use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// One experiment's record: named deviation checks plus free-form metrics.
/// Failures are reported, not thrown.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub experiment: String,
    pub seed: Option<u64>,
    pub checks: Vec<CheckOutcome>,
    pub metrics: BTreeMap<String, f64>,
}

impl RunReport {
    pub fn new(experiment: impl Into<String>) -> Self {
        RunReport {
            experiment: experiment.into(),
            seed: None,
            checks: Vec::new(),
            metrics: BTreeMap::new(),
        }
    }

    pub fn push_check(&mut self, name: impl Into<String>, max_deviation: f64, tolerance: f64) {
        // NaN deviations count as failures.
        let passed = max_deviation <= tolerance;
        self.checks.push(CheckOutcome {
            name: name.into(),
            max_deviation,
            tolerance,
            passed,
        });
    }

    pub fn set_metric(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.insert(name.into(), value);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}
