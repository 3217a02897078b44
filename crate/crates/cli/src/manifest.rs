use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Serialize;

/// One built-in check. `value` and `limit` are omitted for purely boolean
/// checks.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub limit: Option<f64>,
    pub detail: String,
}

impl Check {
    /// Passes when `value < limit`.
    pub fn below(name: &str, value: f64, limit: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed: value < limit,
            value: Some(finite_or_max(value)),
            limit: Some(limit),
            detail: detail.into(),
        }
    }

    pub fn flag(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, value: None, limit: None, detail: detail.into() }
    }
}

// JSON has no infinity; an infinite z-score is reported as f64::MAX.
fn finite_or_max(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else {
        f64::MAX
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub seed: u64,
    /// The effective configuration, in the config file syntax.
    pub config: String,
    pub checks: Vec<Check>,
    pub timings: BTreeMap<String, f64>,
    pub versions: BTreeMap<String, String>,
    pub outputs: Vec<PathBuf>,
    pub passed: bool,
}
