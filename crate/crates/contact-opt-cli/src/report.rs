//! Run reports: what branch ran, terminal residuals, invariant diagnostics,
//! and pass/fail check lines. Serialized as JSON with deterministic key
//! order.

use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub kind: String,
    pub command: String,
    /// Solver branch taken: "normal", "abnormal", "reduced-contact",
    /// "flow", "oracle".
    pub branch: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda0: Option<f64>,
    pub accepted_steps: usize,
    pub terminal_residuals: BTreeMap<String, f64>,
    pub diagnostics: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
    /// Constraint expressions dumped when a singular problem stops.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub constraint_dump: Vec<String>,
    pub wall_time_s: f64,
}

impl RunReport {
    pub fn new(kind: &str, command: &str, branch: &str, seed: u64) -> RunReport {
        RunReport {
            kind: kind.to_string(),
            command: command.to_string(),
            branch: branch.to_string(),
            seed,
            lambda0: None,
            accepted_steps: 0,
            terminal_residuals: BTreeMap::new(),
            diagnostics: BTreeMap::new(),
            checks: Vec::new(),
            notes: Vec::new(),
            constraint_dump: Vec::new(),
            wall_time_s: 0.0,
        }
    }

    pub fn check(&mut self, name: &str, value: f64, threshold: f64) {
        self.checks.push(Check {
            name: name.to_string(),
            value,
            threshold,
            pass: value <= threshold,
        });
    }

    /// A check that requires `value >= threshold` (e.g. monotonicity
    /// margins); stored with the same record shape.
    pub fn check_at_least(&mut self, name: &str, value: f64, threshold: f64) {
        self.checks.push(Check {
            name: name.to_string(),
            value,
            threshold,
            pass: value >= threshold,
        });
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }
}
