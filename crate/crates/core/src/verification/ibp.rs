//! Integration-by-parts identities for the slope observable `Y = <f, u_t>`,
//! estimated with weighted Brownian ensembles in a shared noise realization.
//!
//! Every replica owns one noise field (and, for random initial data, one
//! initial profile). On it we build ensembles from the quadrature nodes of `f`
//! and one ensemble from the base point `x`. The identities are Gaussian
//! integration by parts on the lattice noise (resp. the lattice white noise
//! behind the initial data), so both sides are evaluated on the same replica.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::{Boundary, Grid1D};
use crate::kernels::{build_mollifier, derive_init_kernel, InitKernel, Mollifier, MollifierShape};
use crate::noise::{SmoothInitialProfile, Stencil};
use crate::polymer::{environment_grid, Environment, InitialHeight, PathSampler, WeightedEnsemble};
use crate::rng::child_seed;
use crate::spde::TestFunction;
use crate::stats;

use super::family::{OuterFunction, ScaledFunction};
use super::report::VerificationReport;

/// Initial data of the flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialData {
    /// A fixed smooth height profile.
    Height(InitialHeight),
    /// `u0 = psi * (lattice white noise)`, resampled per replica.
    SmoothedWhite { width: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IbpConfig {
    pub t: f64,
    /// Base point of the derivative ensemble.
    pub x: f64,
    /// Noise mollifier half-width.
    pub epsilon: f64,
    pub shape: MollifierShape,
    pub test_function: TestFunction,
    pub outer: ScaledFunction,
    /// Spacing of the quadrature nodes of `f`.
    pub node_spacing: f64,
    /// Paths per ensemble.
    pub paths: usize,
    pub replicas: usize,
    pub initial: InitialData,
    /// Path and noise time step; default `(epsilon / 4)^2` capped at `t / 50`.
    pub dt: Option<f64>,
    pub bootstrap_resamples: usize,
    pub seed: u64,
}

impl IbpConfig {
    /// Defaults: `t = 0.25`, `x = 0`, a unit-mass bump of half-width 0.5 at the
    /// origin, `F = tanh(y / |f|)`, node spacing 0.05.
    pub fn new(epsilon: f64, initial: InitialData, paths: usize, replicas: usize, seed: u64) -> Self {
        let test_function = TestFunction::bump_with_integral(0.0, 0.5, 1.0);
        Self {
            t: 0.25,
            x: 0.0,
            epsilon,
            shape: MollifierShape::Bump,
            test_function,
            outer: ScaledFunction::new(OuterFunction::Tanh, 1.0),
            node_spacing: 0.05,
            paths,
            replicas,
            initial,
            dt: None,
            bootstrap_resamples: 2000,
            seed,
        }
    }

    pub fn time_step(&self) -> f64 {
        let target = self.dt.unwrap_or_else(|| (0.25 * self.epsilon).powi(2).min(self.t / 50.0));
        self.t / (self.t / target).ceil()
    }

    fn validate(&self) -> Result<()> {
        if !(self.t > 0.0) {
            return Err(LabError::invalid("t", "must be positive"));
        }
        if self.paths < 2 || self.replicas < 2 {
            return Err(LabError::invalid("paths", "need at least 2 paths and 2 replicas"));
        }
        if !(self.node_spacing > 0.0) {
            return Err(LabError::invalid("node_spacing", "must be positive"));
        }
        if let InitialData::SmoothedWhite { width } = self.initial {
            if !(width > 0.0) {
                return Err(LabError::invalid("psi_width", "must be positive"));
            }
        }
        Ok(())
    }
}

/// What a replica should evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Want {
    Smoothed,
    Initial,
}

/// Per-replica values of both sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ReplicaSample {
    pub y: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// The sign-kernel term of the correction (initial-data runs only).
    pub sign_term: f64,
    pub min_ess_fraction: f64,
    pub degenerate: bool,
    pub clamped: usize,
}

/// Data shared by all replicas.
struct Setup {
    cfg: IbpConfig,
    grid: Grid1D,
    dt: f64,
    n: usize,
    phi: Mollifier,
    /// `R'` on the lattice at lags `0..=2 * half_len`.
    cross: Vec<f64>,
    nodes: Vec<f64>,
    f_weights: Vec<f64>,
    fp_weights: Vec<f64>,
    /// Brownian positions from the origin, path-major, `n + 1` per path.
    node_paths: Vec<f64>,
    base_paths: Vec<f64>,
    init: Option<(Mollifier, InitKernel, Grid1D)>,
}

impl Setup {
    fn new(cfg: &IbpConfig) -> Result<Self> {
        cfg.validate()?;
        let phi = build_mollifier(cfg.shape, cfg.epsilon)?;
        let dt = cfg.time_step();
        let (lo, hi) = cfg.test_function.support();
        let count = ((hi - lo) / cfg.node_spacing).round().max(1.0) as usize;
        let h = (hi - lo) / count as f64;
        let nodes: Vec<f64> = (0..count).map(|j| lo + (j as f64 + 0.5) * h).collect();
        let f_weights = nodes.iter().map(|&z| cfg.test_function.value(z) * h).collect();
        let fp_weights = nodes.iter().map(|&z| cfg.test_function.derivative(z) * h).collect();
        let grid = environment_grid(lo.min(cfg.x), hi.max(cfg.x), cfg.t, cfg.epsilon)?;
        let stencil = Stencil::new(&phi, grid.dx())?;
        let cross = (0..=2 * stencil.half_len() as i64).map(|k| stencil.cross_covariance(k)).collect();
        let node_sampler = PathSampler::new(0.0, cfg.t, dt, child_seed(cfg.seed, 0xA))?;
        let base_sampler = PathSampler::new(0.0, cfg.t, dt, child_seed(cfg.seed, 0xB))?;
        let n = node_sampler.n_steps;
        let fill = |s: &PathSampler| {
            let mut out = vec![0.0; cfg.paths * (n + 1)];
            for (k, chunk) in out.chunks_exact_mut(n + 1).enumerate() {
                s.positions(k, chunk);
            }
            out
        };
        let init = match cfg.initial {
            InitialData::SmoothedWhite { width } => {
                let psi = build_mollifier(cfg.shape, width)?;
                let kernel = derive_init_kernel(&psi)?;
                let margin = 2.0 * width;
                let cells = ((grid.length() + 2.0 * margin) / (width / 8.0)).ceil() as usize;
                let zeta_grid = Grid1D::new(grid.x_min() - margin, grid.x_max() + margin, cells, Boundary::Truncated)?;
                Some((psi, kernel, zeta_grid))
            }
            InitialData::Height(_) => None,
        };
        Ok(Self {
            cfg: cfg.clone(),
            grid,
            dt,
            n,
            phi,
            cross,
            nodes,
            f_weights,
            fp_weights,
            node_paths: fill(&node_sampler),
            base_paths: fill(&base_sampler),
            init,
        })
    }

    fn path<'a>(&self, store: &'a [f64], k: usize) -> &'a [f64] {
        &store[k * (self.n + 1)..(k + 1) * (self.n + 1)]
    }

    fn cross_at(&self, lag: i64) -> f64 {
        let k = lag.unsigned_abs() as usize;
        if k >= self.cross.len() {
            0.0
        } else {
            lag.signum() as f64 * self.cross[k]
        }
    }

    fn replica(&self, r: usize, want: Want, noise_seed: u64, init_seed: u64) -> Result<ReplicaSample> {
        let cfg = &self.cfg;
        let (n, dt, m) = (self.n, self.dt, cfg.paths);
        let env = match want {
            Want::Smoothed => Environment::sample(self.grid, dt, n, &self.phi, noise_seed, r as u64)?,
            Want::Initial => Environment::sample_field_only(self.grid, dt, n, &self.phi, noise_seed, r as u64)?,
        };
        let profile = self.init.as_ref().map(|(psi, _, zg)| SmoothInitialProfile::sample(zg, psi, init_seed, r as u64));
        let height = |x: f64| match (&profile, cfg.initial) {
            (Some(p), _) => p.height(x),
            (None, InitialData::Height(h)) => h.eval(x),
            (None, _) => 0.0,
        };
        let slope = |x: f64| match (&profile, cfg.initial) {
            (Some(p), _) => p.slope(x),
            (None, InitialData::Height(h)) => h.slope(x),
            (None, _) => 0.0,
        };
        let correction = -0.5 * env.r0() * n as f64 * dt;
        let mut clamped = 0usize;
        let mut log_weight = |origin: f64, p: &[f64]| {
            let mut acc = 0.0;
            for (s, &b) in p[..n].iter().enumerate() {
                let loc = env.locate(origin + b);
                clamped += loc.clamped as usize;
                acc += env.eta_at(s, loc);
            }
            acc * dt + correction + height(origin + p[n])
        };

        let mut node_weights = Vec::with_capacity(self.nodes.len());
        let mut y = 0.0;
        for (j, &z) in self.nodes.iter().enumerate() {
            let lw: Vec<f64> = (0..m).map(|l| log_weight(z, self.path(&self.node_paths, l))).collect();
            let w = WeightedEnsemble::from_log_weights(lw, 0);
            y -= self.fp_weights[j] * w.log_z;
            node_weights.push(w);
        }
        let f = cfg.outer;
        let mut min_ess = node_weights.iter().map(|w| w.ess / m as f64).fold(1.0, f64::min);
        let mut degenerate = node_weights.iter().any(|w| w.degenerate);

        let (lhs, rhs, sign_term) = match want {
            Want::Smoothed => {
                let lw: Vec<f64> = (0..m).map(|k| log_weight(cfg.x, self.path(&self.base_paths, k))).collect();
                let base = WeightedEnsemble::from_log_weights(lw, 0);
                min_ess = min_ess.min(base.ess / m as f64);
                degenerate |= base.degenerate;
                let (g, k) = self.smoothed_sides(&env, &base, &node_weights);
                (f.value(y) * g, -f.derivative(y) * k, 0.0)
            }
            Want::Initial => {
                let (_, kernel, _) = self.init.as_ref().expect("initial-data run needs a random profile");
                let (inner, s_a, s_sgn) = self.initial_sides(&node_weights, kernel, &slope);
                (f.value(y) * inner, -f.derivative(y) * s_a, 0.5 * f.derivative(y) * s_sgn)
            }
        };
        Ok(ReplicaSample { y, lhs, rhs, sign_term, min_ess_fraction: min_ess, degenerate, clamped })
    }

    /// `G = sum_k w_k sum_s d(eta)(X_s) dt` on the base ensemble, and
    /// `K = sum_s dt sum_{i,i'} mu2_s[i] mu1_s[i'] R'(i' - i)`.
    fn smoothed_sides(&self, env: &Environment, base: &WeightedEnsemble, nodes: &[WeightedEnsemble]) -> (f64, f64) {
        let (n, dt) = (self.n, self.dt);
        let cells = self.grid.n_cells();
        let mut mu1 = vec![0.0; n * cells];
        let mut mu2 = vec![0.0; n * cells];
        let mut g_terms = Vec::with_capacity(self.cfg.paths);
        for (k, &w) in base.normalized.iter().enumerate() {
            let p = self.path(&self.base_paths, k);
            let mut acc = 0.0;
            for (s, &ps) in p.iter().enumerate().take(n) {
                let loc = env.locate(self.cfg.x + ps);
                acc += env.deta_at(s, loc);
                let o = s * cells + loc.cell;
                mu1[o] += w * (1.0 - loc.frac);
                mu1[o + 1] += w * loc.frac;
            }
            g_terms.push(w * acc * dt);
        }
        for (j, ens) in nodes.iter().enumerate() {
            let c = self.fp_weights[j];
            if c == 0.0 {
                continue;
            }
            for (l, &w) in ens.normalized.iter().enumerate() {
                let p = self.path(&self.node_paths, l);
                let cw = c * w;
                for (s, &ps) in p.iter().enumerate().take(n) {
                    let loc = env.locate(self.nodes[j] + ps);
                    let o = s * cells + loc.cell;
                    mu2[o] += cw * (1.0 - loc.frac);
                    mu2[o + 1] += cw * loc.frac;
                }
            }
        }
        let reach = self.cross.len() as i64 - 1;
        let mut k_steps = Vec::with_capacity(n);
        for s in 0..n {
            let a = &mu1[s * cells..(s + 1) * cells];
            let b = &mu2[s * cells..(s + 1) * cells];
            let mut total = 0.0;
            for (ip, &v1) in a.iter().enumerate() {
                if v1 == 0.0 {
                    continue;
                }
                let lo = (ip as i64 - reach).max(0);
                let hi = (ip as i64 + reach).min(cells as i64 - 1);
                let mut nu = 0.0;
                for i in lo..=hi {
                    nu += b[i as usize] * self.cross_at(ip as i64 - i);
                }
                total += v1 * nu;
            }
            k_steps.push(total);
        }
        (stats::pairwise_sum(&g_terms), stats::pairwise_sum(&k_steps) * dt)
    }

    /// Returns `inner = sum_p m1_p u0(y_p)`, the covariance contraction
    /// `S_a = sum_{p,q} m1_p m2_q a(y_q - y_p) - (sum_p m1_p a(-y_p)) (sum_q m2_q)`
    /// and the sign sum `sum_{p,q} m1_p m2_q sgn(y_q - y_p)`, over all endpoints.
    fn initial_sides(&self, nodes: &[WeightedEnsemble], kernel: &InitKernel, slope: &dyn Fn(f64) -> f64) -> (f64, f64, f64) {
        let n = self.n;
        let mut pts: Vec<(f64, f64, f64)> = Vec::with_capacity(nodes.len() * self.cfg.paths);
        for (j, ens) in nodes.iter().enumerate() {
            for (l, &w) in ens.normalized.iter().enumerate() {
                let y = self.nodes[j] + self.path(&self.node_paths, l)[n];
                pts.push((y, self.f_weights[j] * w, self.fp_weights[j] * w));
            }
        }
        let inner: f64 = stats::pairwise_sum(&pts.iter().map(|&(y, m1, _)| m1 * slope(y)).collect::<Vec<_>>());
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total_m2: f64 = pts.iter().map(|p| p.2).sum();
        // sign part through prefix sums over the sorted endpoints
        let mut sgn_sum = 0.0;
        let mut below = 0.0;
        let mut i = 0;
        while i < pts.len() {
            let mut j = i;
            let mut tie_m2 = 0.0;
            while j < pts.len() && pts[j].0 == pts[i].0 {
                tie_m2 += pts[j].2;
                j += 1;
            }
            let above = total_m2 - below - tie_m2;
            for p in &pts[i..j] {
                sgn_sum += p.1 * (above - below);
            }
            below += tie_m2;
            i = j;
        }
        // compact correction a - sgn/2 over pairs closer than the kernel support
        let radius = kernel.support_radius();
        let mut compact = 0.0;
        let mut start = 0;
        for p in &pts {
            while pts[start].0 <= p.0 - radius {
                start += 1;
            }
            let mut row = 0.0;
            for q in &pts[start..] {
                let d = q.0 - p.0;
                if d >= radius {
                    break;
                }
                if d != 0.0 {
                    row += q.2 * (kernel.primitive(d) - 0.5 * d.signum());
                }
            }
            compact += p.1 * row;
        }
        let anchor: f64 = pts.iter().map(|p| p.1 * kernel.primitive(-p.0)).sum();
        let s_a = 0.5 * sgn_sum + compact - anchor * total_m2;
        (inner, s_a, sgn_sum)
    }
}

fn run(setup: &Setup, want: Want, noise_seed: u64, init_seed: u64) -> Result<Vec<ReplicaSample>> {
    (0..setup.cfg.replicas).into_par_iter().map(|r| setup.replica(r, want, noise_seed, init_seed)).collect()
}

/// Per-replica samples together with the report built from them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IbpOutcome {
    pub report: VerificationReport,
    pub samples: Vec<ReplicaSample>,
}

impl IbpOutcome {
    pub fn degenerate_replicas(&self) -> usize {
        self.samples.iter().filter(|s| s.degenerate).count()
    }
}

fn outcome(name: &str, cfg: &IbpConfig, samples: Vec<ReplicaSample>, extra: &[(&str, f64)]) -> IbpOutcome {
    let lhs: Vec<f64> = samples.iter().map(|s| s.lhs).collect();
    let rhs: Vec<f64> = samples.iter().map(|s| s.rhs).collect();
    let mut report = VerificationReport::from_pairs(name, &lhs, &rhs, cfg.bootstrap_resamples, child_seed(cfg.seed, 0xB007))
        .with_seeds(vec![cfg.seed])
        .with_param("t", cfg.t)
        .with_param("x", cfg.x)
        .with_param("epsilon", cfg.epsilon)
        .with_param("paths", cfg.paths)
        .with_param("outer", cfg.outer.name())
        .with_param("degenerate_replicas", samples.iter().filter(|s| s.degenerate).count())
        .with_param("min_ess_fraction", samples.iter().map(|s| s.min_ess_fraction).fold(1.0, f64::min));
    for (k, v) in extra {
        report = report.with_param(k, v);
    }
    IbpOutcome { report, samples }
}

/// `E[F(Y) int d(eta) rho] = -E[F'(Y) int f' int R' rho rho]` for the smoothed flow.
pub fn verify_prop_smoothed(cfg: &IbpConfig) -> Result<IbpOutcome> {
    let setup = Setup::new(cfg)?;
    let samples = run(&setup, Want::Smoothed, cfg.seed, child_seed(cfg.seed, 0x1417))?;
    Ok(outcome("ibp smoothed noise", cfg, samples, &[]))
}

/// `E[F(Y) int int u0 rho f] = -E[F'(Y) int int f f' a rho rho]` for smoothed
/// white-noise initial data.
pub fn verify_prop_init(cfg: &IbpConfig) -> Result<IbpOutcome> {
    let InitialData::SmoothedWhite { width } = cfg.initial else {
        return Err(LabError::invalid("initial", "the initial-data identity needs random smoothed white-noise data"));
    };
    let setup = Setup::new(cfg)?;
    let samples = run(&setup, Want::Initial, cfg.seed, child_seed(cfg.seed, 0x1417))?;
    Ok(outcome("ibp initial data", cfg, samples, &[("psi_width", width)]))
}

/// The two terms of the correction and their sum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaEstimate {
    /// `(1/2) int int f f' sgn(y2 - y1) E[F'(Y) rho rho]`.
    pub term1: f64,
    /// `int int u0 rho f E[F(Y)]`.
    pub term2: f64,
    pub total: f64,
    /// Report on `term2 = -term1`, i.e. on the total vanishing.
    pub report: VerificationReport,
    pub samples: Vec<ReplicaSample>,
}

/// Correction term of the KPZ identity, averaged over noise and (for random
/// data) initial profiles. Replicas flagged degenerate are kept and counted.
pub fn estimate_gamma(cfg: &IbpConfig) -> Result<GammaEstimate> {
    let setup = Setup::new(cfg)?;
    let mut samples = if setup.init.is_some() {
        run(&setup, Want::Initial, cfg.seed, child_seed(cfg.seed, 0x1417))?
    } else {
        run_deterministic_gamma(&setup)?
    };
    for s in samples.iter_mut() {
        // report compares term2 (lhs) with -term1
        s.rhs = -s.sign_term;
    }
    let term1 = stats::mean(&samples.iter().map(|s| s.sign_term).collect::<Vec<_>>());
    let term2 = stats::mean(&samples.iter().map(|s| s.lhs).collect::<Vec<_>>());
    let extra: Vec<(&str, f64)> = match cfg.initial {
        InitialData::SmoothedWhite { width } => vec![("psi_width", width)],
        InitialData::Height(_) => vec![],
    };
    let out = outcome("gamma cancellation", cfg, samples, &extra);
    Ok(GammaEstimate { term1, term2, total: term1 + term2, report: out.report, samples: out.samples })
}

/// Deterministic initial heights: the sign term and `F(Y) <rho f, u0>` without a covariance contraction.
fn run_deterministic_gamma(setup: &Setup) -> Result<Vec<ReplicaSample>> {
    let cfg = &setup.cfg;
    let InitialData::Height(h0) = cfg.initial else { unreachable!() };
    let psi = build_mollifier(cfg.shape, cfg.epsilon)?;
    let kernel = derive_init_kernel(&psi)?;
    (0..cfg.replicas)
        .into_par_iter()
        .map(|r| {
            let mut s = setup.replica_with_height(r, &kernel, &h0)?;
            s.rhs = 0.0;
            Ok(s)
        })
        .collect()
}

impl Setup {
    fn replica_with_height(&self, r: usize, kernel: &InitKernel, h0: &InitialHeight) -> Result<ReplicaSample> {
        let cfg = &self.cfg;
        let (n, dt, m) = (self.n, self.dt, cfg.paths);
        let env = Environment::sample_field_only(self.grid, dt, n, &self.phi, cfg.seed, r as u64)?;
        let correction = -0.5 * env.r0() * n as f64 * dt;
        let mut nodes = Vec::with_capacity(self.nodes.len());
        let mut y = 0.0;
        for (j, &z) in self.nodes.iter().enumerate() {
            let lw: Vec<f64> = (0..m)
                .map(|l| {
                    let p = self.path(&self.node_paths, l);
                    let eta: f64 = p[..n].iter().enumerate().map(|(s, &b)| env.eta_at(s, env.locate(z + b))).sum();
                    eta * dt + correction + h0.eval(z + p[n])
                })
                .collect();
            let w = WeightedEnsemble::from_log_weights(lw, 0);
            y -= self.fp_weights[j] * w.log_z;
            nodes.push(w);
        }
        let (inner, _, s_sgn) = self.initial_sides(&nodes, kernel, &|x| h0.slope(x));
        let f = cfg.outer;
        Ok(ReplicaSample {
            y,
            lhs: f.value(y) * inner,
            rhs: 0.0,
            sign_term: 0.5 * f.derivative(y) * s_sgn,
            min_ess_fraction: nodes.iter().map(|w| w.ess / m as f64).fold(1.0, f64::min),
            degenerate: nodes.iter().any(|w| w.degenerate),
            clamped: 0,
        })
    }
}

/// Variance of the per-replica difference with shared noise against the
/// variance when the right side comes from an independent run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrnComparison {
    pub seed: u64,
    pub shared_variance: f64,
    pub independent_variance: f64,
}

/// Runs the smoothed-noise identity with common and with independent random
/// numbers for the given seed.
pub fn compare_common_random_numbers(cfg: &IbpConfig) -> Result<CrnComparison> {
    let setup = Setup::new(cfg)?;
    let a = run(&setup, Want::Smoothed, cfg.seed, 0)?;
    let b = run(&setup, Want::Smoothed, child_seed(cfg.seed, 0x1DE9), 0)?;
    let shared: Vec<f64> = a.iter().map(|s| s.lhs - s.rhs).collect();
    let independent: Vec<f64> = a.iter().zip(&b).map(|(s, t)| s.lhs - t.rhs).collect();
    Ok(CrnComparison {
        seed: cfg.seed,
        shared_variance: stats::variance(&shared),
        independent_variance: stats::variance(&independent),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(eps: f64, initial: InitialData) -> IbpConfig {
        let mut c = IbpConfig::new(eps, initial, 40, 200, 7);
        c.node_spacing = 0.1;
        c.bootstrap_resamples = 500;
        c
    }

    #[test]
    fn constant_outer_function_has_zero_right_side() {
        let mut cfg = small(0.4, InitialData::Height(InitialHeight::Sine { amplitude: 0.3, wavenumber: 2.0 }));
        cfg.outer = ScaledFunction::unit(OuterFunction::Constant { value: 1.0 });
        let out = verify_prop_smoothed(&cfg).unwrap();
        assert!(out.samples.iter().all(|s| s.rhs == 0.0));
        assert!(out.report.pass, "{:?}", out.report);
        let mut cfg = small(0.4, InitialData::SmoothedWhite { width: 0.4 });
        cfg.outer = ScaledFunction::unit(OuterFunction::Constant { value: 1.0 });
        let out = verify_prop_init(&cfg).unwrap();
        assert!(out.samples.iter().all(|s| s.rhs == 0.0));
        assert!(out.report.pass, "{:?}", out.report);
    }

    #[test]
    fn smoothed_identity_small_run() {
        let cfg = small(0.4, InitialData::Height(InitialHeight::Sine { amplitude: 0.3, wavenumber: 2.0 }));
        let out = verify_prop_smoothed(&cfg).unwrap();
        assert!(out.report.pass, "{:?}", out.report);
        assert!(out.report.se > 0.0);
    }

    #[test]
    fn initial_identity_small_run() {
        let cfg = small(0.4, InitialData::SmoothedWhite { width: 0.4 });
        let out = verify_prop_init(&cfg).unwrap();
        assert!(out.report.pass, "{:?}", out.report);
    }

    #[test]
    fn gamma_is_additive_and_vanishes_without_data() {
        let mut cfg = small(0.4, InitialData::Height(InitialHeight::Flat));
        cfg.outer = ScaledFunction::unit(OuterFunction::Constant { value: 1.0 });
        cfg.replicas = 8;
        let g = estimate_gamma(&cfg).unwrap();
        assert_eq!(g.term2, 0.0);
        assert_eq!(g.term1, 0.0);
        assert_eq!(g.total, 0.0);
        let cfg = small(0.4, InitialData::SmoothedWhite { width: 0.4 });
        let g = estimate_gamma(&cfg).unwrap();
        assert!((g.total - (g.term1 + g.term2)).abs() <= 1e-12);
    }

    #[test]
    fn short_time_gamma_matches_quadrature() {
        // one tiny step: endpoints sit at the nodes, so Y -> <f, u0> and
        // Gamma -> F(Y0) Y0 - |f|^2 F'(Y0)
        let h0 = InitialHeight::Sine { amplitude: 0.4, wavenumber: 1.5 };
        let mut cfg = small(0.4, InitialData::Height(h0));
        cfg.t = 1e-6;
        cfg.dt = Some(1e-6);
        cfg.node_spacing = 0.01;
        cfg.replicas = 4;
        let g = estimate_gamma(&cfg).unwrap();
        let f = cfg.test_function;
        let q = |g: &dyn Fn(f64) -> f64| crate::quadrature::integrate(g, -0.5, 0.5, 200, 8);
        let y0 = q(&|x| f.value(x) * h0.slope(x));
        let norm = q(&|x| f.value(x) * f.value(x));
        let term2 = cfg.outer.value(y0) * y0;
        let term1 = -norm * cfg.outer.derivative(y0);
        assert!((g.term2 - term2).abs() < 2e-2 * term2.abs().max(0.1), "{} vs {term2}", g.term2);
        assert!((g.term1 - term1).abs() < 2e-2 * term1.abs().max(0.1), "{} vs {term1}", g.term1);
    }
}
