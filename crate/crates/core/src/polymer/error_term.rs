use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::{Boundary, Grid1D};
use crate::kernels::{build_mollifier, derive_kernels, MollifierShape};
use crate::rng::child_seed;
use crate::stats::{self, LinearFit};

use super::environment::Environment;
use super::paths::PathSampler;
use super::stopping::{stopped_integral, stopping_times};
use super::weights::WeightedEnsemble;

/// Realizations may be discarded for weight degeneracy up to this fraction.
pub const MAX_DISCARD_FRACTION: f64 = 0.2;

/// Noise cells per mollifier radius on the environment grid.
pub const NOISE_CELLS_PER_EPSILON: f64 = 8.0;

/// Deterministic initial height profiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialHeight {
    #[default]
    Flat,
    Linear { slope: f64 },
    /// `amplitude * sin(wavenumber * x)`.
    Sine { amplitude: f64, wavenumber: f64 },
}

impl InitialHeight {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            InitialHeight::Flat => 0.0,
            InitialHeight::Linear { slope } => slope * x,
            InitialHeight::Sine { amplitude, wavenumber } => amplitude * (wavenumber * x).sin(),
        }
    }

    /// The initial slope `u0 = h0'`.
    pub fn slope(&self, x: f64) -> f64 {
        match *self {
            InitialHeight::Flat => 0.0,
            InitialHeight::Linear { slope } => slope,
            InitialHeight::Sine { amplitude, wavenumber } => amplitude * wavenumber * (wavenumber * x).cos(),
        }
    }

    /// Checks `|h0(x)| <= alpha + beta |x|` at the centres of `grid`.
    pub fn check_growth(&self, alpha: f64, beta: f64, grid: &Grid1D) -> Result<()> {
        match grid.centers().find(|&x| self.eval(x).abs() > alpha + beta * x.abs()) {
            Some(x) => Err(LabError::invalid("h0", format!("violates growth bound at x = {x}"))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTermConfig {
    pub t: f64,
    pub x1: f64,
    pub x2: f64,
    pub epsilon: f64,
    pub shape: MollifierShape,
    /// Paths per ensemble.
    pub paths: usize,
    /// Independent noise realizations.
    pub realizations: usize,
    /// `false` runs with the noise switched off.
    pub noise: bool,
    pub h0: InitialHeight,
    pub growth_alpha: f64,
    pub growth_beta: f64,
    /// Path time step; by default `(epsilon / 4)^2`, capped at `t / 50`.
    pub dt: Option<f64>,
    pub bootstrap_resamples: usize,
    pub seed: u64,
}

impl ErrorTermConfig {
    pub fn new(t: f64, x1: f64, x2: f64, epsilon: f64, paths: usize, seed: u64) -> Self {
        Self {
            t,
            x1,
            x2,
            epsilon,
            shape: MollifierShape::Bump,
            paths,
            realizations: 16,
            noise: true,
            h0: InitialHeight::Flat,
            growth_alpha: 1.0,
            growth_beta: 1.0,
            dt: None,
            bootstrap_resamples: 2000,
            seed,
        }
    }

    pub fn time_step(&self) -> f64 {
        let target = self.dt.unwrap_or_else(|| (0.25 * self.epsilon).powi(2).min(self.t / 50.0));
        self.t / (self.t / target).ceil()
    }
}

/// One noise realization of the normalized two-polymer stochastic integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorTermSample {
    pub value: f64,
    pub numerator: f64,
    pub denominator: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTermSummary {
    pub epsilon: f64,
    pub samples: Vec<ErrorTermSample>,
    pub mean_abs: f64,
    pub std_error: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub discarded: usize,
    pub realizations: usize,
    pub clamped_steps: usize,
}

impl ErrorTermSummary {
    pub fn discard_rate(&self) -> f64 {
        self.discarded as f64 / self.realizations as f64
    }
}

enum Outcome {
    Kept(ErrorTermSample, usize),
    Discarded,
}

/// Truncated noise grid covering paths started in `[lo, hi]` up to six standard
/// deviations at horizon `t`, with [`NOISE_CELLS_PER_EPSILON`] cells per radius.
pub fn environment_grid(lo: f64, hi: f64, t: f64, epsilon: f64) -> Result<Grid1D> {
    let reach = 6.0 * t.sqrt() + 4.0 * epsilon;
    let dx = epsilon / NOISE_CELLS_PER_EPSILON;
    let (lo, hi) = (lo - reach, hi + reach);
    Grid1D::new(lo, hi, ((hi - lo) / dx).ceil() as usize, Boundary::Truncated)
}

/// Estimates `E|E_{t,x1,x2}|` over noise realizations, each realization using
/// two independent weighted ensembles in a shared environment.
pub fn estimate_error_term(cfg: &ErrorTermConfig) -> Result<ErrorTermSummary> {
    if cfg.paths < 2 || cfg.realizations < 2 {
        return Err(LabError::invalid("paths", "need at least 2 paths and 2 realizations"));
    }
    let phi = build_mollifier(cfg.shape, cfg.epsilon)?;
    let kernels = derive_kernels(&phi)?;
    let grid = environment_grid(cfg.x1.min(cfg.x2), cfg.x1.max(cfg.x2), cfg.t, cfg.epsilon)?;
    cfg.h0.check_growth(cfg.growth_alpha, cfg.growth_beta, &grid)?;
    let dt = cfg.time_step();
    let radius = kernels.support_radius();

    let outcomes: Vec<Result<Outcome>> = (0..cfg.realizations)
        .into_par_iter()
        .map(|r| {
            let rseed = child_seed(cfg.seed, r as u64);
            let s1 = PathSampler::new(cfg.x1, cfg.t, dt, child_seed(rseed, 1))?;
            let s2 = PathSampler::new(cfg.x2, cfg.t, dt, child_seed(rseed, 2))?;
            let n = s1.n_steps;
            let env = if cfg.noise {
                Environment::sample(grid, dt, n, &phi, cfg.seed, r as u64)?
            } else {
                Environment::quiet(grid, dt, n, 0.0)
            };
            let correction = -0.5 * env.r0() * cfg.t;
            let (mut p1, mut p2) = (vec![0.0; n + 1], vec![0.0; n + 1]);
            let mut lw1 = Vec::with_capacity(cfg.paths);
            let mut lw2 = Vec::with_capacity(cfg.paths);
            let mut integrals = Vec::with_capacity(cfg.paths);
            let mut clamped = 0usize;
            let mut log_weight = |p: &[f64]| {
                let mut acc = 0.0;
                if !env.is_quiet() {
                    for (k, &x) in p[..n].iter().enumerate() {
                        let loc = env.locate(x);
                        clamped += loc.clamped as usize;
                        acc += env.eta_at(k, loc);
                    }
                }
                acc * dt + correction + cfg.h0.eval(p[n])
            };
            for k in 0..cfg.paths {
                s1.positions(k, &mut p1);
                s2.positions(k, &mut p2);
                lw1.push(log_weight(&p1));
                lw2.push(log_weight(&p2));
                let st = stopping_times(&p1, &p2, radius);
                let integral = if st.sigma_idx < st.tau_idx {
                    stopped_integral(&p1, &p2, st.sigma_idx, st.tau_idx, &kernels)
                } else {
                    0.0
                };
                integrals.push(integral);
            }
            let w1 = WeightedEnsemble::from_log_weights(lw1, clamped);
            let w2 = WeightedEnsemble::from_log_weights(lw2, 0);
            if w1.degenerate || w2.degenerate {
                return Ok(Outcome::Discarded);
            }
            // M sum(w1 w2 I) / (sum w1)(sum w2) with self-normalized weights
            let m = cfg.paths as f64;
            let terms: Vec<f64> = (0..cfg.paths).map(|k| w1.normalized[k] * w2.normalized[k] * integrals[k]).collect();
            let value = m * stats::pairwise_sum(&terms);
            let denominator = (w1.log_z + w2.log_z).exp();
            Ok(Outcome::Kept(ErrorTermSample { value, numerator: value * denominator, denominator }, w1.clamped))
        })
        .collect();

    let mut samples = Vec::new();
    let mut discarded = 0;
    let mut clamped_steps = 0;
    for o in outcomes {
        match o? {
            Outcome::Kept(s, c) => {
                samples.push(s);
                clamped_steps += c;
            }
            Outcome::Discarded => discarded += 1,
        }
    }
    if discarded as f64 > MAX_DISCARD_FRACTION * cfg.realizations as f64 {
        return Err(LabError::ExcessiveDiscards {
            discarded,
            total: cfg.realizations,
            limit_pct: (100.0 * MAX_DISCARD_FRACTION).round() as u32,
        });
    }
    let abs: Vec<f64> = samples.iter().map(|s| s.value.abs()).collect();
    let (ci_lo, ci_hi) = stats::bootstrap_mean_ci(&abs, cfg.bootstrap_resamples, 0.95, child_seed(cfg.seed, u64::MAX));
    Ok(ErrorTermSummary {
        epsilon: cfg.epsilon,
        mean_abs: stats::mean(&abs),
        std_error: stats::std_error(&abs),
        ci_lo,
        ci_hi,
        discarded,
        realizations: cfg.realizations,
        clamped_steps,
        samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingResult {
    pub points: Vec<ErrorTermSummary>,
    pub paths: usize,
    pub seed: u64,
    /// Slope of `log E|E|` against `log epsilon`.
    pub fit: LinearFit,
    /// Same fit with `|log epsilon|^{1/2}` divided out.
    pub log_corrected_fit: LinearFit,
    /// Some smaller epsilon exceeds a larger one beyond CI overlap.
    pub non_monotone: bool,
}

impl ScalingResult {
    pub fn slope_ci(&self) -> (f64, f64) {
        (self.fit.slope - 1.96 * self.fit.slope_se, self.fit.slope + 1.96 * self.fit.slope_se)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epsilon", "mean_abs_E", "ci_lo", "ci_hi", "discard_rate", "M", "seed"])?;
        for p in &self.points {
            w.write_record([
                p.epsilon.to_string(),
                p.mean_abs.to_string(),
                p.ci_lo.to_string(),
                p.ci_hi.to_string(),
                p.discard_rate().to_string(),
                self.paths.to_string(),
                self.seed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Smallest accepted ratio of the largest to the smallest width (about a
/// decade; 0.4 down to 0.05 qualifies).
pub const MIN_EPSILON_SPAN: f64 = 8.0;

/// Runs [`estimate_error_term`] for each epsilon (all else fixed) and fits the decay order.
pub fn scaling_study(base: &ErrorTermConfig, epsilons: &[f64]) -> Result<ScalingResult> {
    if epsilons.len() < 4 {
        return Err(LabError::invalid("epsilons", "need at least 4 values"));
    }
    let (lo, hi) = epsilons.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &e| (a.min(e), b.max(e)));
    if hi / lo < MIN_EPSILON_SPAN - 1e-9 {
        return Err(LabError::invalid("epsilons", format!("values must span a factor of at least {MIN_EPSILON_SPAN}")));
    }
    let mut sorted = epsilons.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let points = sorted
        .iter()
        .map(|&epsilon| estimate_error_term(&ErrorTermConfig { epsilon, dt: None, ..base.clone() }))
        .collect::<Result<Vec<_>>>()?;
    let x: Vec<f64> = points.iter().map(|p| p.epsilon.ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.mean_abs.ln()).collect();
    let yc: Vec<f64> = points.iter().map(|p| (p.mean_abs / p.epsilon.ln().abs().sqrt()).ln()).collect();
    let non_monotone = points.windows(2).any(|w| w[1].ci_lo > w[0].ci_hi);
    Ok(ScalingResult {
        fit: stats::linear_fit(&x, &y),
        log_corrected_fit: stats::linear_fit(&x, &yc),
        non_monotone,
        paths: base.paths,
        seed: base.seed,
        points,
    })
}
