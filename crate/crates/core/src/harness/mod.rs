//! Experiment runner behind the `kpzlab` command line: configuration,
//! seeded parallel execution, and persisted reports and manifests.
//!
//! A run writes into `<out>/<experiment>/`:
//! - `report.json`: deterministic for a fixed configuration and seed;
//! - `reports.csv`: one row per checked identity;
//! - experiment-specific CSV and binary artifacts;
//! - `manifest.json`: config hash, code version, wall time and artifact list.

pub mod acceptance;
pub mod config;
pub mod experiments;
pub mod manifest;
pub mod output;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::verification::VerificationReport;

pub use acceptance::{Criterion, CriterionResult};
pub use config::{ExperimentConfig, ExperimentId, ExperimentParams, Overrides, DEFAULT_SEED, OUT_ENV};
pub use experiments::{execute, ExperimentOutput};
pub use manifest::{RunManifest, RunStatus};
pub use output::ArtifactDir;

/// What a finished (or failed) run produced.
#[derive(Debug)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub run_dir: Option<PathBuf>,
    pub output: Option<ExperimentOutput>,
    pub error: Option<String>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        self.status.exit_code()
    }

    fn failed(status: RunStatus, error: impl ToString) -> Self {
        Self { status, run_dir: None, output: None, error: Some(error.to_string()) }
    }
}

fn classify(e: &LabError) -> RunStatus {
    match e {
        LabError::Config { .. } | LabError::InvalidParameter { .. } | LabError::EnumerationTooLarge { .. } | LabError::DegreeOverflow { .. } => {
            RunStatus::ConfigError
        }
        e if e.is_numerical() => RunStatus::NumericalAbort,
        _ => RunStatus::Aborted,
    }
}

/// Runs `f` on a pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| LabError::Config { path: "threads".into(), reason: e.to_string() })?;
            Ok(pool.install(f))
        }
    }
}

#[derive(Serialize)]
struct ReportDocument<'a> {
    experiment: &'a str,
    config_hash: String,
    seed: u64,
    params: serde_json::Value,
    pass: bool,
    reports: &'a [VerificationReport],
    summary: &'a std::collections::BTreeMap<String, serde_json::Value>,
}

/// The deterministic JSON report of a run.
pub fn report_json(cfg: &ExperimentConfig, output: &ExperimentOutput) -> Result<String> {
    let doc = ReportDocument {
        experiment: cfg.experiment.name(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        params: serde_json::to_value(&cfg.params)?,
        pass: output.pass,
        reports: &output.reports,
        summary: &output.summary,
    };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    Ok(text)
}

/// Table of reports with the name in the first column.
pub fn write_reports_csv(out: &ArtifactDir, name: &str, reports: &[VerificationReport]) -> Result<PathBuf> {
    out.csv(name, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["name", "lhs", "rhs", "diff", "se", "ci_lo", "ci_hi", "n_replicas", "pass"])?;
        for r in reports {
            w.write_record([
                r.name.clone(),
                r.lhs.to_string(),
                r.rhs.to_string(),
                r.diff.to_string(),
                r.se.to_string(),
                r.ci.0.to_string(),
                r.ci.1.to_string(),
                r.n_replicas.to_string(),
                r.pass.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "worker panicked".to_string()
    }
}

/// Loads the configuration and runs it.
pub fn run(id: ExperimentId, config_file: Option<&Path>, overrides: &Overrides) -> RunOutcome {
    match ExperimentConfig::load(id, config_file, overrides) {
        Ok(cfg) => run_config(&cfg),
        Err(e) => RunOutcome::failed(RunStatus::ConfigError, e),
    }
}

/// Runs a resolved configuration and persists its artifacts and manifest.
pub fn run_config(cfg: &ExperimentConfig) -> RunOutcome {
    let dir = match cfg.prepare_output() {
        Ok(d) => d,
        Err(e) => return RunOutcome::failed(RunStatus::ConfigError, e),
    };
    let artifacts = ArtifactDir::new(&dir, cfg.hash(), cfg.seed);
    let start = Instant::now();
    let result = with_threads(cfg.threads, || catch_unwind(AssertUnwindSafe(|| execute(cfg, &artifacts))));
    let mut diagnostics = Vec::new();
    let (status, output) = match result {
        Err(e) => (classify(&e), {
            diagnostics.push(e.to_string());
            None
        }),
        Ok(Err(panic)) => {
            diagnostics.push(format!("panic: {}", panic_message(panic.as_ref())));
            (RunStatus::Aborted, None)
        }
        Ok(Ok(Err(e))) => {
            diagnostics.push(e.to_string());
            (classify(&e), None)
        }
        Ok(Ok(Ok(o))) => (if o.pass { RunStatus::Pass } else { RunStatus::Fail }, Some(o)),
    };
    let mut status = status;
    let mut report = None;
    if let Some(o) = &output {
        let written = report_json(cfg, o)
            .and_then(|text| artifacts.bytes("report.json", text.as_bytes()))
            .and_then(|_| write_reports_csv(&artifacts, "reports.csv", &o.reports));
        match written {
            Ok(_) => report = Some("report.json".to_string()),
            Err(e) => {
                diagnostics.push(format!("writing reports: {e}"));
                status = RunStatus::Aborted;
            }
        }
    }
    let manifest = RunManifest {
        experiment: cfg.experiment.name().to_string(),
        status,
        exit_code: status.exit_code(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        code_version: manifest::code_version(),
        threads: cfg.threads,
        wall_time_s: start.elapsed().as_secs_f64(),
        report,
        artifacts: artifacts.written(),
        summary: output.as_ref().map(|o| o.summary.clone()).unwrap_or_default(),
        timings: output.as_ref().map(|o| o.timings.clone()).unwrap_or_default(),
        diagnostics: diagnostics.clone(),
    };
    if let Err(e) = artifacts.json("manifest.json", &manifest) {
        diagnostics.push(format!("writing manifest: {e}"));
        status = RunStatus::Aborted;
    }
    RunOutcome {
        status,
        run_dir: Some(dir),
        output,
        error: if diagnostics.is_empty() { None } else { Some(diagnostics.join("; ")) },
    }
}
