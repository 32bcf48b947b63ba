use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Outcome class of a run, mirrored by the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Pass,
    Fail,
    ConfigError,
    NumericalAbort,
    /// A worker panicked or an I/O error stopped the run.
    Aborted,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Pass => 0,
            RunStatus::Fail => 1,
            RunStatus::ConfigError => 2,
            RunStatus::NumericalAbort | RunStatus::Aborted => 3,
        }
    }
}

/// Provenance record written next to the artifacts of every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub status: RunStatus,
    pub exit_code: i32,
    pub config_hash: String,
    pub seed: u64,
    pub code_version: String,
    pub threads: Option<usize>,
    pub wall_time_s: f64,
    /// Deterministic report file, absent when the run did not finish.
    pub report: Option<String>,
    pub artifacts: Vec<String>,
    pub summary: BTreeMap<String, serde_json::Value>,
    pub timings: BTreeMap<String, f64>,
    pub diagnostics: Vec<String>,
}

/// Crate version, with the commit appended when the build provides one.
pub fn code_version() -> String {
    match option_env!("KPZLAB_COMMIT") {
        Some(c) if !c.is_empty() => format!("{}+{c}", env!("CARGO_PKG_VERSION")),
        _ => env!("CARGO_PKG_VERSION").to_string(),
    }
}
