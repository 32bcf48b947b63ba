//! Experiment configuration: a TOML document with one section per
//! subcommand, overridden by command-line flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};
use crate::kernels::MollifierShape;
use crate::polymer::MIN_EPSILON_SPAN;
use crate::verification::{OuterFunction, MIN_STEIN_SAMPLES};

/// Seed used when neither the config file nor the command line sets one.
pub const DEFAULT_SEED: u64 = 0x5EED_2026;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "KPZLAB_OUT";

/// Output directory when nothing else is given.
pub const DEFAULT_OUT: &str = "kpzlab-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    SheSim,
    BurgersSmoothed,
    SteinTest,
    IbpSmoothed,
    IbpInit,
    Gamma,
    ItoCheck,
    ErrorScaling,
    LatticeInvariance,
    AsepInvariance,
    AsepSim,
    HeightIdentities,
    Cancellation,
    AllAcceptance,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 14] = [
        ExperimentId::SheSim,
        ExperimentId::BurgersSmoothed,
        ExperimentId::SteinTest,
        ExperimentId::IbpSmoothed,
        ExperimentId::IbpInit,
        ExperimentId::Gamma,
        ExperimentId::ItoCheck,
        ExperimentId::ErrorScaling,
        ExperimentId::LatticeInvariance,
        ExperimentId::AsepInvariance,
        ExperimentId::AsepSim,
        ExperimentId::HeightIdentities,
        ExperimentId::Cancellation,
        ExperimentId::AllAcceptance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::SheSim => "she-sim",
            ExperimentId::BurgersSmoothed => "burgers-smoothed",
            ExperimentId::SteinTest => "stein-test",
            ExperimentId::IbpSmoothed => "ibp-smoothed",
            ExperimentId::IbpInit => "ibp-init",
            ExperimentId::Gamma => "gamma",
            ExperimentId::ItoCheck => "ito-check",
            ExperimentId::ErrorScaling => "error-scaling",
            ExperimentId::LatticeInvariance => "lattice-invariance",
            ExperimentId::AsepInvariance => "asep-invariance",
            ExperimentId::AsepSim => "asep-sim",
            ExperimentId::HeightIdentities => "height-identities",
            ExperimentId::Cancellation => "cancellation",
            ExperimentId::AllAcceptance => "all-acceptance",
        }
    }

    /// One-line description for command-line help.
    pub fn about(self) -> &'static str {
        match self {
            ExperimentId::SheSim => "Heat-kernel check and Monte Carlo mean of the stochastic heat equation",
            ExperimentId::BurgersSmoothed => "Smoothed Burgers solver: steady states, convergence and covariance",
            ExperimentId::SteinTest => "Gaussian Stein test of the white-noise marginal",
            ExperimentId::IbpSmoothed => "Integration-by-parts identity for the smoothed flow",
            ExperimentId::IbpInit => "Integration-by-parts identity at a deterministic initial condition",
            ExperimentId::Gamma => "Two-term Gamma identity with shared driving noise",
            ExperimentId::ItoCheck => "Pathwise Ito cancellation and its convergence order",
            ExperimentId::ErrorScaling => "Scaling of the error term with the smoothing width",
            ExperimentId::LatticeInvariance => "Exact generator pairings for the lattice model",
            ExperimentId::AsepInvariance => "Exact Bernoulli invariance of ASEP",
            ExperimentId::AsepSim => "Weakly asymmetric exclusion simulation and height profile",
            ExperimentId::HeightIdentities => "Local height-pattern identities",
            ExperimentId::Cancellation => "Cancellation suite for the smoothed error term",
            ExperimentId::AllAcceptance => "Run the acceptance criteria C1-C11",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentId {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        ExperimentId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| LabError::Config { path: "experiment".into(), reason: format!("unknown experiment `{s}`") })
    }
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(f64),
        Many(Vec<f64>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SheInitial {
    /// `1/dx` in the cell containing the origin.
    Delta,
    Flat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SheSimParams {
    pub dx: f64,
    pub half_width: f64,
    /// Horizon of the noise-off heat-kernel comparison.
    pub heat_t: f64,
    /// Horizon of the Monte Carlo mean check.
    pub t: f64,
    pub replicas: usize,
    /// Cells with `|x| <= probe` enter the mean check.
    pub probe: f64,
    pub initial: SheInitial,
    /// Snapshot interval (steps) of the exported trajectory.
    pub snapshot_every: usize,
}

impl Default for SheSimParams {
    fn default() -> Self {
        Self {
            dx: 0.05,
            half_width: 4.5,
            heat_t: 0.5,
            t: 0.25,
            replicas: 10_000,
            probe: 1.0,
            initial: SheInitial::Delta,
            snapshot_every: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BurgersParams {
    pub epsilon: f64,
    pub shape: MollifierShape,
    pub dx: f64,
    /// Length of the periodic domain.
    pub length: f64,
    pub t: f64,
    pub replicas: usize,
    /// Lags (in cells) of the two-point function.
    pub lags: Vec<usize>,
    pub constant: f64,
    pub sine_amplitude: f64,
}

impl Default for BurgersParams {
    fn default() -> Self {
        Self {
            epsilon: 0.2,
            shape: MollifierShape::Bump,
            dx: 0.05,
            length: 4.0,
            t: 0.1,
            replicas: 4000,
            lags: vec![0, 2, 4],
            constant: 0.7,
            sine_amplitude: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SteinMode {
    /// Observables of the stationary flow.
    She,
    /// Exact Gaussian samples (calibration).
    ExactGaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SteinParams {
    pub mode: SteinMode,
    pub t: f64,
    pub dx: f64,
    pub replicas: usize,
    pub resamples: usize,
    /// Sample size in exact-Gaussian mode.
    pub samples: usize,
    pub sigma_sq: f64,
}

impl Default for SteinParams {
    fn default() -> Self {
        Self { mode: SteinMode::She, t: 0.25, dx: 0.05, replicas: 10_000, resamples: 10_000, samples: 10_000, sigma_sq: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IbpParams {
    /// Noise widths (smoothed-noise identity) or initial-data widths.
    #[serde(deserialize_with = "one_or_many")]
    pub widths: Vec<f64>,
    pub shape: MollifierShape,
    pub t: f64,
    pub x: f64,
    pub paths: usize,
    pub replicas: usize,
    pub node_spacing: f64,
    /// Outer function: `x`, `x^2`, `tanh`, `sin`, `H3`, `H4` or `const(c)`.
    pub outer: String,
    pub outer_scale: f64,
    /// Initial height `amplitude sin(wavenumber x)` for the smoothed-noise identity.
    pub h0_amplitude: f64,
    pub h0_wavenumber: f64,
    pub resamples: usize,
}

impl Default for IbpParams {
    fn default() -> Self {
        Self {
            widths: vec![0.4, 0.2, 0.1],
            shape: MollifierShape::Bump,
            t: 0.25,
            x: 0.0,
            paths: 100,
            replicas: 2000,
            node_spacing: 0.05,
            outer: "tanh".into(),
            outer_scale: 1.0,
            h0_amplitude: 0.3,
            h0_wavenumber: 2.0,
            resamples: 2000,
        }
    }
}

impl IbpParams {
    fn gamma_default() -> Self {
        Self { widths: vec![0.1], ..Self::default() }
    }

    pub fn outer_function(&self) -> Result<OuterFunction> {
        self.outer.parse().map_err(|reason| LabError::Config { path: "outer".into(), reason })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ItoParams {
    pub epsilon: f64,
    pub shape: MollifierShape,
    pub t: f64,
    pub x1: f64,
    pub x2: f64,
    #[serde(deserialize_with = "one_or_many")]
    pub dts: Vec<f64>,
    pub pairs: usize,
    pub min_order: f64,
}

impl Default for ItoParams {
    fn default() -> Self {
        Self {
            epsilon: 0.4,
            shape: MollifierShape::Bump,
            t: 1.0,
            x1: 0.0,
            x2: 0.0,
            dts: vec![0.01, 0.005, 0.0025],
            pairs: 1000,
            min_order: 0.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErrorScalingParams {
    #[serde(deserialize_with = "one_or_many")]
    pub eps: Vec<f64>,
    pub shape: MollifierShape,
    pub t: f64,
    pub x1: f64,
    pub x2: f64,
    /// Run with the noise switched off and fit the decay slope.
    pub baseline: bool,
    pub baseline_paths: usize,
    pub baseline_realizations: usize,
    /// Run with full noise and check monotone decay.
    pub noisy: bool,
    pub paths: usize,
    pub realizations: usize,
    pub slope_min: f64,
    pub slope_max: f64,
    pub resamples: usize,
}

impl Default for ErrorScalingParams {
    fn default() -> Self {
        Self {
            eps: vec![0.4, 0.2, 0.1, 0.05],
            shape: MollifierShape::Bump,
            t: 0.25,
            x1: 0.0,
            x2: 0.2,
            baseline: true,
            baseline_paths: 100_000,
            baseline_realizations: 4,
            noisy: true,
            paths: 100_000,
            realizations: 8,
            slope_min: 0.8,
            slope_max: 1.2,
            resamples: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeParams {
    pub sizes: Vec<usize>,
    pub max_degree: u32,
    pub tolerance: f64,
}

impl Default for LatticeParams {
    fn default() -> Self {
        Self { sizes: (5..=10).collect(), max_degree: 5, tolerance: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsepInvarianceParams {
    pub n: usize,
    pub rho: f64,
    pub p: f64,
    pub q: f64,
    pub tolerance: f64,
}

impl Default for AsepInvarianceParams {
    fn default() -> Self {
        Self { n: 8, rho: 0.5, p: 0.75, q: 0.25, tolerance: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsepSimParams {
    pub n: usize,
    pub rho: f64,
    /// Weak-asymmetry scale; rates follow from it.
    pub epsilon: f64,
    /// Macroscopic horizon (microscopic time `t_end / epsilon^2`).
    pub t_end: f64,
    pub frames: usize,
}

impl Default for AsepSimParams {
    fn default() -> Self {
        Self { n: 64, rho: 0.5, epsilon: 0.25, t_end: 1.0, frames: 11 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeightIdentityParams {
    #[serde(deserialize_with = "one_or_many")]
    pub eps: Vec<f64>,
}

impl Default for HeightIdentityParams {
    fn default() -> Self {
        Self { eps: vec![1.0, 0.25, 0.0625] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CancellationParams {
    pub epsilon: f64,
    pub psi_width: f64,
    pub shape: MollifierShape,
    pub t: f64,
    pub x: f64,
    pub paths: usize,
    pub environments: usize,
    pub grid_points: usize,
    pub span: f64,
    pub resamples: usize,
}

impl Default for CancellationParams {
    fn default() -> Self {
        Self {
            epsilon: 0.2,
            psi_width: 0.2,
            shape: MollifierShape::Bump,
            t: 0.25,
            x: 0.0,
            paths: 10_000,
            environments: 24,
            grid_points: 21,
            span: 1.0,
            resamples: 2000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcceptanceParams {
    /// Criteria to run, e.g. `["C1", "C4"]`; all when empty.
    pub criteria: Vec<String>,
}


/// Typed parameters of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ExperimentParams {
    SheSim(SheSimParams),
    Burgers(BurgersParams),
    Stein(SteinParams),
    Ibp(IbpParams),
    Ito(ItoParams),
    ErrorScaling(ErrorScalingParams),
    Lattice(LatticeParams),
    AsepInvariance(AsepInvarianceParams),
    AsepSim(AsepSimParams),
    HeightIdentities(HeightIdentityParams),
    Cancellation(CancellationParams),
    Acceptance(AcceptanceParams),
}

impl ExperimentParams {
    pub fn defaults(id: ExperimentId) -> Self {
        match id {
            ExperimentId::SheSim => Self::SheSim(Default::default()),
            ExperimentId::BurgersSmoothed => Self::Burgers(Default::default()),
            ExperimentId::SteinTest => Self::Stein(Default::default()),
            ExperimentId::IbpSmoothed | ExperimentId::IbpInit => Self::Ibp(Default::default()),
            ExperimentId::Gamma => Self::Ibp(IbpParams::gamma_default()),
            ExperimentId::ItoCheck => Self::Ito(Default::default()),
            ExperimentId::ErrorScaling => Self::ErrorScaling(Default::default()),
            ExperimentId::LatticeInvariance => Self::Lattice(Default::default()),
            ExperimentId::AsepInvariance => Self::AsepInvariance(Default::default()),
            ExperimentId::AsepSim => Self::AsepSim(Default::default()),
            ExperimentId::HeightIdentities => Self::HeightIdentities(Default::default()),
            ExperimentId::Cancellation => Self::Cancellation(Default::default()),
            ExperimentId::AllAcceptance => Self::Acceptance(Default::default()),
        }
    }

    fn parse(id: ExperimentId, table: toml::Table) -> Result<Self> {
        fn typed<T: DeserializeOwned>(section: &str, table: toml::Table) -> Result<T> {
            let json = serde_json::to_value(&table)?;
            serde_path_to_error::deserialize(json).map_err(|e| {
                let inner = e.path().to_string();
                let path = if inner == "." { section.to_string() } else { format!("{section}.{inner}") };
                LabError::Config { path, reason: e.into_inner().to_string() }
            })
        }
        let s = id.name();
        Ok(match id {
            ExperimentId::SheSim => Self::SheSim(typed(s, table)?),
            ExperimentId::BurgersSmoothed => Self::Burgers(typed(s, table)?),
            ExperimentId::SteinTest => Self::Stein(typed(s, table)?),
            ExperimentId::IbpSmoothed | ExperimentId::IbpInit => Self::Ibp(typed(s, table)?),
            ExperimentId::Gamma => {
                let mut merged = toml::Table::try_from(IbpParams::gamma_default()).expect("defaults serialize");
                merged.extend(table);
                Self::Ibp(typed(s, merged)?)
            }
            ExperimentId::ItoCheck => Self::Ito(typed(s, table)?),
            ExperimentId::ErrorScaling => Self::ErrorScaling(typed(s, table)?),
            ExperimentId::LatticeInvariance => Self::Lattice(typed(s, table)?),
            ExperimentId::AsepInvariance => Self::AsepInvariance(typed(s, table)?),
            ExperimentId::AsepSim => Self::AsepSim(typed(s, table)?),
            ExperimentId::HeightIdentities => Self::HeightIdentities(typed(s, table)?),
            ExperimentId::Cancellation => Self::Cancellation(typed(s, table)?),
            ExperimentId::AllAcceptance => Self::Acceptance(typed(s, table)?),
        })
    }
}

/// Field-path aware validation helpers.
struct Checker<'a> {
    section: &'a str,
}

impl Checker<'_> {
    fn fail(&self, field: &str, reason: impl Into<String>) -> LabError {
        LabError::Config { path: format!("{}.{field}", self.section), reason: reason.into() }
    }

    fn positive(&self, field: &str, v: f64) -> Result<()> {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(self.fail(field, format!("must be positive and finite, got {v}")))
        }
    }

    fn finite(&self, field: &str, v: f64) -> Result<()> {
        if v.is_finite() {
            Ok(())
        } else {
            Err(self.fail(field, "must be finite"))
        }
    }

    fn at_least(&self, field: &str, v: usize, min: usize) -> Result<()> {
        if v >= min {
            Ok(())
        } else {
            Err(self.fail(field, format!("must be at least {min}, got {v}")))
        }
    }

    fn all_positive(&self, field: &str, v: &[f64]) -> Result<()> {
        if v.is_empty() {
            return Err(self.fail(field, "must not be empty"));
        }
        for (i, &x) in v.iter().enumerate() {
            self.positive(&format!("{field}[{i}]"), x)?;
        }
        Ok(())
    }

    fn probability(&self, field: &str, v: f64) -> Result<()> {
        if (0.0..=1.0).contains(&v) {
            Ok(())
        } else {
            Err(self.fail(field, format!("must lie in [0, 1], got {v}")))
        }
    }
}

impl ExperimentParams {
    /// Checks that every physical parameter is in range.
    pub fn validate(&self, id: ExperimentId) -> Result<()> {
        let c = Checker { section: id.name() };
        match self {
            Self::SheSim(p) => {
                c.positive("dx", p.dx)?;
                c.positive("half_width", p.half_width)?;
                c.positive("heat_t", p.heat_t)?;
                c.positive("t", p.t)?;
                c.positive("probe", p.probe)?;
                c.at_least("replicas", p.replicas, 2)?;
                c.at_least("snapshot_every", p.snapshot_every, 1)?;
                if p.probe >= p.half_width {
                    return Err(c.fail("probe", "must lie inside the domain"));
                }
            }
            Self::Burgers(p) => {
                c.positive("epsilon", p.epsilon)?;
                c.positive("dx", p.dx)?;
                c.positive("length", p.length)?;
                c.positive("t", p.t)?;
                c.finite("constant", p.constant)?;
                c.finite("sine_amplitude", p.sine_amplitude)?;
                c.at_least("replicas", p.replicas, 2)?;
                if p.epsilon < p.dx {
                    return Err(c.fail("epsilon", "mollifier must span at least one cell"));
                }
            }
            Self::Stein(p) => {
                c.positive("t", p.t)?;
                c.positive("dx", p.dx)?;
                c.positive("sigma_sq", p.sigma_sq)?;
                match p.mode {
                    SteinMode::She => c.at_least("replicas", p.replicas, MIN_STEIN_SAMPLES)?,
                    SteinMode::ExactGaussian => c.at_least("samples", p.samples, MIN_STEIN_SAMPLES)?,
                }
                c.at_least("resamples", p.resamples, 1)?;
            }
            Self::Ibp(p) => {
                c.all_positive("widths", &p.widths)?;
                c.positive("t", p.t)?;
                c.finite("x", p.x)?;
                c.positive("node_spacing", p.node_spacing)?;
                c.positive("outer_scale", p.outer_scale)?;
                c.finite("h0_amplitude", p.h0_amplitude)?;
                c.finite("h0_wavenumber", p.h0_wavenumber)?;
                c.at_least("paths", p.paths, 2)?;
                c.at_least("replicas", p.replicas, 2)?;
                c.at_least("resamples", p.resamples, 1)?;
                p.outer_function().map_err(|_| c.fail("outer", format!("unknown outer function `{}`", p.outer)))?;
            }
            Self::Ito(p) => {
                c.positive("epsilon", p.epsilon)?;
                c.positive("t", p.t)?;
                c.finite("x1", p.x1)?;
                c.finite("x2", p.x2)?;
                c.all_positive("dts", &p.dts)?;
                c.at_least("pairs", p.pairs, 2)?;
                c.finite("min_order", p.min_order)?;
            }
            Self::ErrorScaling(p) => {
                c.all_positive("eps", &p.eps)?;
                if p.eps.len() < 4 {
                    return Err(c.fail("eps", "need at least 4 widths"));
                }
                let (lo, hi) = p.eps.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &e| (a.min(e), b.max(e)));
                if hi / lo < MIN_EPSILON_SPAN - 1e-9 {
                    return Err(c.fail("eps", format!("widths must span a factor of at least {MIN_EPSILON_SPAN}")));
                }
                c.positive("t", p.t)?;
                c.finite("x1", p.x1)?;
                c.finite("x2", p.x2)?;
                c.at_least("baseline_paths", p.baseline_paths, 2)?;
                c.at_least("baseline_realizations", p.baseline_realizations, 2)?;
                c.at_least("paths", p.paths, 2)?;
                c.at_least("realizations", p.realizations, 2)?;
                c.at_least("resamples", p.resamples, 1)?;
            }
            Self::Lattice(p) => {
                if p.sizes.is_empty() {
                    return Err(c.fail("sizes", "must not be empty"));
                }
                for (i, &n) in p.sizes.iter().enumerate() {
                    c.at_least(&format!("sizes[{i}]"), n, 3)?;
                }
                c.positive("tolerance", p.tolerance)?;
            }
            Self::AsepInvariance(p) => {
                c.at_least("n", p.n, 2)?;
                c.probability("rho", p.rho)?;
                c.positive("p", p.p + p.q)?;
                if p.p < 0.0 || p.q < 0.0 {
                    return Err(c.fail(if p.p < 0.0 { "p" } else { "q" }, "rates must be non-negative"));
                }
                c.positive("tolerance", p.tolerance)?;
            }
            Self::AsepSim(p) => {
                c.at_least("n", p.n, 2)?;
                c.probability("rho", p.rho)?;
                c.positive("epsilon", p.epsilon)?;
                c.positive("t_end", p.t_end)?;
                c.at_least("frames", p.frames, 1)?;
            }
            Self::HeightIdentities(p) => c.all_positive("eps", &p.eps)?,
            Self::Cancellation(p) => {
                c.positive("epsilon", p.epsilon)?;
                c.positive("psi_width", p.psi_width)?;
                c.positive("t", p.t)?;
                c.finite("x", p.x)?;
                c.positive("span", p.span)?;
                c.at_least("paths", p.paths, 2)?;
                c.at_least("environments", p.environments, 2)?;
                c.at_least("grid_points", p.grid_points, 1)?;
                c.at_least("resamples", p.resamples, 1)?;
            }
            Self::Acceptance(p) => {
                for (i, name) in p.criteria.iter().enumerate() {
                    if super::acceptance::Criterion::parse(name).is_none() {
                        return Err(c.fail(&format!("criteria[{i}]"), format!("unknown criterion `{name}`")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub seed: u64,
    /// Worker threads; the global pool when `None`.
    pub threads: Option<usize>,
    pub out_dir: PathBuf,
    pub params: ExperimentParams,
}

/// Command-line input layered over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    /// `key = value` pairs for the experiment section.
    pub values: Vec<(String, String)>,
}

impl Overrides {
    /// Parses `--key value` and `--key=value` tokens and `key=value` pairs.
    pub fn parse_tokens(tokens: &[String]) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        let mut it = tokens.iter();
        while let Some(tok) = it.next() {
            let Some(body) = tok.strip_prefix("--") else {
                return Err(LabError::Config { path: tok.clone(), reason: "expected `--key value`".into() });
            };
            if let Some((k, v)) = body.split_once('=') {
                out.push((k.to_string(), v.to_string()));
            } else {
                let v = it.next().ok_or_else(|| LabError::Config { path: body.to_string(), reason: "missing value".into() })?;
                out.push((body.to_string(), v.clone()));
            }
        }
        Ok(out)
    }

    /// Parses a single `key=value` pair.
    pub fn parse_pair(pair: &str) -> Result<(String, String)> {
        pair.split_once('=')
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .ok_or_else(|| LabError::Config { path: pair.to_string(), reason: "expected `key=value`".into() })
    }
}

/// Interprets a command-line value as TOML, falling back to comma lists and strings.
fn override_value(raw: &str) -> toml::Value {
    let parse = |s: &str| -> Option<toml::Value> {
        let doc: toml::Table = format!("v = {s}").parse().ok()?;
        doc.get("v").cloned()
    };
    if let Some(v) = parse(raw) {
        return v;
    }
    if raw.contains(',') {
        let items: Vec<toml::Value> =
            raw.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse(s.trim()).unwrap_or_else(|| toml::Value::String(s.trim().into()))).collect();
        return toml::Value::Array(items);
    }
    toml::Value::String(raw.to_string())
}

fn config_error(path: impl Into<String>, reason: impl fmt::Display) -> LabError {
    LabError::Config { path: path.into(), reason: reason.to_string() }
}

impl ExperimentConfig {
    /// Defaults for `id` with the given seed, writing below `out_dir`.
    pub fn defaults(id: ExperimentId, seed: u64, out_dir: impl Into<PathBuf>) -> Self {
        Self { experiment: id, seed, threads: None, out_dir: out_dir.into(), params: ExperimentParams::defaults(id) }
    }

    /// Resolves the configuration from an optional TOML file and overrides.
    pub fn load(id: ExperimentId, file: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let doc: toml::Table = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| config_error(p.display().to_string(), e))?;
                text.parse().map_err(|e: toml::de::Error| config_error(p.display().to_string(), e.message()))?
            }
            None => toml::Table::new(),
        };
        Self::from_document(id, doc, overrides)
    }

    /// Like [`ExperimentConfig::load`] with the document already parsed.
    pub fn from_document(id: ExperimentId, doc: toml::Table, overrides: &Overrides) -> Result<Self> {
        let mut seed = DEFAULT_SEED;
        let mut threads = None;
        let mut out = None;
        let mut section = toml::Table::new();
        for (key, value) in doc {
            match key.as_str() {
                "seed" => {
                    seed = value
                        .as_integer()
                        .and_then(|v| u64::try_from(v).ok())
                        .ok_or_else(|| config_error("seed", "must be a non-negative integer"))?
                }
                "threads" => {
                    threads = Some(
                        value
                            .as_integer()
                            .and_then(|v| usize::try_from(v).ok())
                            .filter(|&v| v > 0)
                            .ok_or_else(|| config_error("threads", "must be a positive integer"))?,
                    )
                }
                "out" => out = Some(PathBuf::from(value.as_str().ok_or_else(|| config_error("out", "must be a string"))?)),
                name => {
                    let known = ExperimentId::from_str(name).map_err(|_| config_error(name, "unknown key or section"))?;
                    let toml::Value::Table(t) = value else {
                        return Err(config_error(name, "section must be a table"));
                    };
                    if known == id {
                        section = t;
                    }
                }
            }
        }
        for (key, raw) in &overrides.values {
            let key = key.replace('-', "_");
            match key.as_str() {
                "seed" | "threads" | "out" => {
                    let mut doc = toml::Table::new();
                    doc.insert(key.clone(), override_value(raw));
                    let top = Self::from_document(id, doc, &Overrides::default())?;
                    match key.as_str() {
                        "seed" => seed = top.seed,
                        "threads" => threads = top.threads,
                        _ => out = Some(top.out_dir),
                    }
                }
                _ => {
                    section.insert(key, override_value(raw));
                }
            }
        }
        if let Some(s) = overrides.seed {
            seed = s;
        }
        if let Some(t) = overrides.threads {
            if t == 0 {
                return Err(config_error("threads", "must be a positive integer"));
            }
            threads = Some(t);
        }
        let out_dir = overrides
            .out
            .clone()
            .or(out)
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        let params = ExperimentParams::parse(id, section)?;
        params.validate(id)?;
        Ok(Self { experiment: id, seed, threads, out_dir, params })
    }

    /// The settings that determine the results: experiment, seed and parameters.
    pub fn canonical_json(&self) -> serde_json::Value {
        let mut m = BTreeMap::new();
        m.insert("experiment", serde_json::to_value(self.experiment).expect("id serializes"));
        m.insert("seed", serde_json::Value::from(self.seed));
        m.insert("params", serde_json::to_value(&self.params).expect("params serialize"));
        serde_json::to_value(m).expect("map serializes")
    }

    /// SHA-256 of the canonical JSON (keys sorted), hex encoded.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(&self.canonical_json()).expect("json serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// The effective configuration as a TOML document.
    pub fn to_toml(&self) -> String {
        let mut doc = toml::Table::new();
        doc.insert("seed".into(), toml::Value::Integer(self.seed as i64));
        if let Some(t) = self.threads {
            doc.insert("threads".into(), toml::Value::Integer(t as i64));
        }
        doc.insert("out".into(), toml::Value::String(self.out_dir.display().to_string()));
        let section = toml::Value::try_from(&self.params).unwrap_or_else(|_| toml::Value::Table(Default::default()));
        doc.insert(self.experiment.name().into(), section);
        toml::to_string(&doc).unwrap_or_default()
    }

    /// `<out>/<experiment>`, created and checked for writability.
    pub fn prepare_output(&self) -> Result<PathBuf> {
        let dir = self.out_dir.join(self.experiment.name());
        std::fs::create_dir_all(&dir).map_err(|e| config_error("out", format!("{}: {e}", dir.display())))?;
        let probe = dir.join(".write-probe");
        std::fs::write(&probe, b"").map_err(|e| config_error("out", format!("{} is not writable: {e}", dir.display())))?;
        let _ = std::fs::remove_file(probe);
        Ok(dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(text: &str) -> toml::Table {
        text.parse().unwrap()
    }

    #[test]
    fn names_round_trip() {
        for id in ExperimentId::ALL {
            assert_eq!(id.name().parse::<ExperimentId>().unwrap(), id);
        }
    }

    #[test]
    fn hash_ignores_field_order() {
        let a = ExperimentConfig::from_document(
            ExperimentId::SheSim,
            doc("seed = 5\n[she-sim]\ndx = 0.1\nreplicas = 20\n"),
            &Overrides::default(),
        )
        .unwrap();
        let b = ExperimentConfig::from_document(
            ExperimentId::SheSim,
            doc("[asep-sim]\nn = 4\n[she-sim]\nreplicas = 20\ndx = 0.1\n"),
            &Overrides { seed: Some(5), ..Default::default() },
        )
        .unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = ExperimentConfig::from_document(ExperimentId::SheSim, doc("seed = 6\n[she-sim]\ndx = 0.1\nreplicas = 20\n"), &Overrides::default())
            .unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn overrides_take_precedence() {
        let o = Overrides {
            values: Overrides::parse_tokens(&["--eps".into(), "0.8,0.4,0.2,0.1".into(), "--paths=7".into()]).unwrap(),
            ..Default::default()
        };
        let cfg = ExperimentConfig::from_document(ExperimentId::ErrorScaling, doc("[error-scaling]\npaths = 3\n"), &o).unwrap();
        let ExperimentParams::ErrorScaling(p) = cfg.params else { panic!() };
        assert_eq!(p.eps, vec![0.8, 0.4, 0.2, 0.1]);
        assert_eq!(p.paths, 7);
    }

    #[test]
    fn single_value_fills_a_list() {
        let o = Overrides { values: vec![("widths".into(), "0.3".into())], ..Default::default() };
        let cfg = ExperimentConfig::from_document(ExperimentId::IbpInit, toml::Table::new(), &o).unwrap();
        let ExperimentParams::Ibp(p) = cfg.params else { panic!() };
        assert_eq!(p.widths, vec![0.3]);
    }

    #[test]
    fn errors_carry_field_paths() {
        let bad_type = ExperimentConfig::from_document(ExperimentId::AsepInvariance, doc("[asep-invariance]\nrho = \"half\"\n"), &Overrides::default());
        match bad_type {
            Err(LabError::Config { path, .. }) => assert_eq!(path, "asep-invariance.rho"),
            other => panic!("{other:?}"),
        }
        let unknown = ExperimentConfig::from_document(ExperimentId::AsepInvariance, doc("[asep-invariance]\nrh = 0.5\n"), &Overrides::default());
        assert!(matches!(unknown, Err(LabError::Config { .. })));
        let negative = ExperimentConfig::from_document(ExperimentId::SheSim, doc("[she-sim]\ndx = -0.1\n"), &Overrides::default());
        match negative {
            Err(LabError::Config { path, .. }) => assert_eq!(path, "she-sim.dx"),
            other => panic!("{other:?}"),
        }
        let section = ExperimentConfig::from_document(ExperimentId::SheSim, doc("[she-simm]\ndx = 0.1\n"), &Overrides::default());
        assert!(matches!(section, Err(LabError::Config { path, .. }) if path == "she-simm"));
    }

    #[test]
    fn gamma_keeps_its_own_default_width() {
        let cfg = ExperimentConfig::from_document(ExperimentId::Gamma, toml::Table::new(), &Overrides::default()).unwrap();
        let ExperimentParams::Ibp(p) = &cfg.params else { panic!() };
        assert_eq!(p.widths, vec![0.1]);
        assert_eq!(cfg.params, ExperimentParams::defaults(ExperimentId::Gamma));
    }

    #[test]
    fn effective_toml_reloads_to_the_same_config() {
        let cfg = ExperimentConfig::defaults(ExperimentId::Cancellation, 11, "somewhere");
        let again = ExperimentConfig::from_document(ExperimentId::Cancellation, doc(&cfg.to_toml()), &Overrides::default()).unwrap();
        assert_eq!(cfg, again);
    }
}
