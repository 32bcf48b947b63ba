use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::stats;

/// Default multiple of the standard error tolerated in a pass.
pub const DEFAULT_SE_MULTIPLE: f64 = 3.0;

/// Outcome of comparing the two sides of an identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub diff: f64,
    pub se: f64,
    pub ci: (f64, f64),
    pub n_replicas: usize,
    pub seeds: Vec<u64>,
    /// `|diff|` must not exceed this many standard errors.
    pub se_multiple: f64,
    /// Absolute tolerance for deterministic checks (no sampling error).
    pub tolerance: Option<f64>,
    pub pass: bool,
    pub params: BTreeMap<String, serde_json::Value>,
}

impl VerificationReport {
    /// Paired per-replica samples of both sides; the difference is analysed
    /// replica by replica (common random numbers).
    pub fn from_pairs(name: impl Into<String>, lhs: &[f64], rhs: &[f64], resamples: usize, seed: u64) -> Self {
        Self::from_pairs_with(name, lhs, rhs, resamples, seed, DEFAULT_SE_MULTIPLE)
    }

    pub fn from_pairs_with(
        name: impl Into<String>,
        lhs: &[f64],
        rhs: &[f64],
        resamples: usize,
        seed: u64,
        se_multiple: f64,
    ) -> Self {
        assert_eq!(lhs.len(), rhs.len(), "paired samples must have equal length");
        let d: Vec<f64> = lhs.iter().zip(rhs).map(|(a, b)| a - b).collect();
        let diff = stats::mean(&d);
        let se = stats::std_error(&d);
        let ci = stats::bootstrap_mean_ci(&d, resamples, 0.95, seed);
        let pass = diff.abs() <= se_multiple * se && ci.0 <= 0.0 && 0.0 <= ci.1;
        Self {
            name: name.into(),
            lhs: stats::mean(lhs),
            rhs: stats::mean(rhs),
            diff,
            se,
            ci,
            n_replicas: d.len(),
            seeds: vec![seed],
            se_multiple,
            tolerance: None,
            pass,
            params: BTreeMap::new(),
        }
    }

    /// A deterministic comparison passing when `|lhs - rhs| <= tolerance`.
    pub fn exact(name: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let diff = lhs - rhs;
        Self {
            name: name.into(),
            lhs,
            rhs,
            diff,
            se: 0.0,
            ci: (diff, diff),
            n_replicas: 1,
            seeds: Vec::new(),
            se_multiple: 0.0,
            tolerance: Some(tolerance),
            pass: diff.abs() <= tolerance,
            params: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, key: &str, value: impl Serialize) -> Self {
        self.params.insert(key.to_string(), serde_json::to_value(value).unwrap_or(serde_json::Value::Null));
        self
    }

    pub fn with_seeds(mut self, seeds: Vec<u64>) -> Self {
        self.seeds = seeds;
        self
    }
}

/// Fixed-width text table of reports.
pub fn format_table(reports: &[VerificationReport]) -> String {
    let mut out = String::new();
    let w = reports.iter().map(|r| r.name.len()).max().unwrap_or(0).max(8);
    let _ = writeln!(
        out,
        "{:<w$} {:>13} {:>13} {:>12} {:>10} {:>25} {:>6}",
        "identity", "lhs", "rhs", "diff", "se", "95% ci", "pass"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<w$} {:>13.6e} {:>13.6e} {:>12.4e} {:>10.3e} [{:>11.3e},{:>11.3e}] {:>6}",
            r.name,
            r.lhs,
            r.rhs,
            r.diff,
            r.se,
            r.ci.0,
            r.ci.1,
            if r.pass { "yes" } else { "NO" }
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_sides_pass_and_shifted_sides_fail() {
        let a: Vec<f64> = (0..500).map(|i| ((i * 37) % 101) as f64 / 101.0).collect();
        let b: Vec<f64> = a.iter().map(|x| x + ((x * 13.0).sin() * 1e-3)).collect();
        let r = VerificationReport::from_pairs("same", &a, &a, 200, 1);
        assert!(r.pass && r.diff == 0.0);
        let shifted: Vec<f64> = b.iter().map(|x| x + 1.0).collect();
        assert!(!VerificationReport::from_pairs("shift", &a, &shifted, 200, 1).pass);
    }

    #[test]
    fn exact_reports_and_json() {
        let r = VerificationReport::exact("x", 1.0, 1.0 + 1e-12, 1e-10).with_param("n", 3);
        assert!(r.pass);
        let j = serde_json::to_string(&r).unwrap();
        let back: VerificationReport = serde_json::from_str(&j).unwrap();
        assert_eq!(back, r);
        assert!(format_table(&[r]).contains("yes"));
    }
}
