//! One runner per subcommand. Runners compute reports and write their
//! experiment-specific tables; the common report files are written by the caller.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::error::{LabError, Result};
use crate::grid::{Boundary, Field, Grid1D};
use crate::kernels::{build_mollifier, derive_kernels};
use crate::lattice::{
    asep_exact_invariance, asep_simulate, generator_pairing_exact, local_pattern_identities, polynomial_library,
    wasep_height, wasep_rates, LocalFunction, OccupancyConfig,
};
use crate::noise::{sample_initial_replica, InitialKind, MollifiedStream, Silent, Stencil, WhiteNoiseStream};
use crate::polymer::{ito_convergence, scaling_study, ErrorTermConfig, InitialHeight};
use crate::rng::{child_seed, stream, Purpose};
use crate::snapshot::{write_snapshots, write_trajectory_csv};
use crate::spde::{solve_she, solve_smoothed_burgers, SolverConfig};
use crate::stats;
use crate::verification::{
    cancellation_suite, estimate_gamma, stationarity_experiment, stein_residual, verify_prop_init,
    verify_prop_smoothed, CancellationConfig, FFamily, IbpConfig, InitialData, ScaledFunction, StationarityConfig,
    VerificationReport,
};

use super::acceptance;
use super::config::*;
use super::output::ArtifactDir;

/// Reports and scalar results of one experiment.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ExperimentOutput {
    pub pass: bool,
    pub reports: Vec<VerificationReport>,
    pub summary: BTreeMap<String, Value>,
    /// Wall-clock measurements; kept out of the deterministic report.
    #[serde(skip)]
    pub timings: BTreeMap<String, f64>,
}

impl ExperimentOutput {
    pub fn from_reports(reports: Vec<VerificationReport>) -> Self {
        let pass = !reports.is_empty() && reports.iter().all(|r| r.pass);
        Self { pass, reports, ..Default::default() }
    }

    pub fn with(mut self, key: &str, value: impl Serialize) -> Self {
        self.summary.insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
        self
    }
}

/// A check that `value` lies in `[lo, hi]`; `diff` is the distance outside.
pub fn range_report(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> VerificationReport {
    VerificationReport::exact(name, value, value.clamp(lo, hi), 0.0).with_param("lo", lo).with_param("hi", hi)
}

/// `|lhs - rhs| <= k se`, with a normal-theory interval.
fn z_report(name: impl Into<String>, lhs: f64, rhs: f64, se: f64, n: usize, k: f64) -> VerificationReport {
    let diff = lhs - rhs;
    VerificationReport {
        name: name.into(),
        lhs,
        rhs,
        diff,
        se,
        ci: (diff - 1.96 * se, diff + 1.96 * se),
        n_replicas: n,
        seeds: Vec::new(),
        se_multiple: k,
        tolerance: None,
        pass: diff.abs() <= k * se,
        params: BTreeMap::new(),
    }
}

/// Runs the experiment named by `cfg`.
pub fn execute(cfg: &ExperimentConfig, out: &ArtifactDir) -> Result<ExperimentOutput> {
    let seed = cfg.seed;
    match (&cfg.params, cfg.experiment) {
        (ExperimentParams::SheSim(p), _) => she_sim(p, seed, out),
        (ExperimentParams::Burgers(p), _) => burgers(p, seed, out),
        (ExperimentParams::Stein(p), _) => stein(p, seed),
        (ExperimentParams::Ibp(p), ExperimentId::IbpSmoothed) => ibp(p, seed, out, Identity::Smoothed),
        (ExperimentParams::Ibp(p), ExperimentId::IbpInit) => ibp(p, seed, out, Identity::Initial),
        (ExperimentParams::Ibp(p), ExperimentId::Gamma) => ibp(p, seed, out, Identity::Gamma),
        (ExperimentParams::Ito(p), _) => ito(p, seed, out),
        (ExperimentParams::ErrorScaling(p), _) => error_scaling(p, seed, out),
        (ExperimentParams::Lattice(p), _) => lattice(p, out),
        (ExperimentParams::AsepInvariance(p), _) => asep_invariance(p, out),
        (ExperimentParams::AsepSim(p), _) => asep_sim(p, seed, out),
        (ExperimentParams::HeightIdentities(p), _) => height_identities(p, out),
        (ExperimentParams::Cancellation(p), _) => cancellation(p, seed),
        (ExperimentParams::Acceptance(p), _) => acceptance::run_selected(p, seed, out),
        (ExperimentParams::Ibp(_), other) => Err(LabError::Config {
            path: other.name().into(),
            reason: "parameters do not belong to this experiment".into(),
        }),
    }
}

fn she_sim(p: &SheSimParams, seed: u64, out: &ArtifactDir) -> Result<ExperimentOutput> {
    let grid = Grid1D::centered(p.half_width, p.dx, Boundary::Truncated)?;
    let origin = grid.center(grid.nearest(0.0));

    // noise-off delta start against the continuum heat kernel
    let heat_cfg = SolverConfig::for_grid(&grid, p.heat_t);
    let heat = solve_she(&Field::delta(grid, 0.0), &mut Silent, &heat_cfg, None)?.terminal;
    let kernel = |x: f64| (-(x - origin).powi(2) / (2.0 * p.heat_t)).exp() / (2.0 * std::f64::consts::PI * p.heat_t).sqrt();
    let rows: Vec<Vec<f64>> = grid.centers().zip(&heat.values).map(|(x, &v)| vec![x, v, kernel(x)]).collect();
    let worst = rows.iter().max_by(|a, b| (a[1] - a[2]).abs().total_cmp(&(b[1] - b[2]).abs())).expect("grid is non-empty");
    let tol = 2.0 * p.dx * p.dx;
    let heat_report = VerificationReport::exact("she heat kernel sup error", worst[1], worst[2], tol)
        .with_param("x", worst[0])
        .with_param("t", p.heat_t)
        .with_param("dx", p.dx);
    out.table("heat_kernel.csv", &["x", "numeric", "exact"], &rows)?;

    // Monte Carlo mean against the noise-off flow of the same start
    let z0 = match p.initial {
        SheInitial::Delta => Field::delta(grid, 0.0),
        SheInitial::Flat => Field::constant(grid, 1.0),
    };
    let cfg = SolverConfig::for_grid(&grid, p.t);
    let flow = solve_she(&z0, &mut Silent, &cfg, None)?.terminal;
    let probe: Vec<usize> = (0..grid.n_cells()).filter(|&i| grid.center(i).abs() <= p.probe).collect();
    let samples: Vec<Vec<f64>> = (0..p.replicas)
        .into_par_iter()
        .map(|r| {
            let mut noise = WhiteNoiseStream::new(&grid, cfg.dt, seed, r as u64)?;
            let sol = solve_she(&z0, &mut noise, &cfg, None)?;
            Ok(probe.iter().map(|&i| sol.terminal.values[i]).collect())
        })
        .collect::<Result<_>>()?;
    let mut table = Vec::with_capacity(probe.len());
    let mut worst_z = (0.0f64, 0usize);
    for (j, &i) in probe.iter().enumerate() {
        let col: Vec<f64> = samples.iter().map(|s| s[j]).collect();
        let (m, se) = (stats::mean(&col), stats::std_error(&col));
        let z = (m - flow.values[i]) / se;
        if z.abs() > worst_z.0.abs() || j == 0 {
            worst_z = (z, j);
        }
        table.push(vec![grid.center(i), m, se, flow.values[i], z]);
    }
    out.table("mc_mean.csv", &["x", "mean", "se", "heat_flow", "z"], &table)?;
    let w = &table[worst_z.1];
    let mut mean_report = z_report("she mc mean vs heat flow (worst cell)", w[1], w[3], w[2], p.replicas, 5.0)
        .with_seeds(vec![seed])
        .with_param("x", w[0])
        .with_param("cells", probe.len())
        .with_param("t", p.t)
        .with_param("dx", p.dx);
    mean_report.pass = table.iter().all(|row| row[4].abs() <= 5.0);

    // one exported trajectory
    let mut noise = WhiteNoiseStream::new(&grid, cfg.dt, seed, 0)?;
    let traj = solve_she(&z0, &mut noise, &cfg, Some(p.snapshot_every))?.trajectory;
    out.csv("trajectory.csv", |buf| write_trajectory_csv(buf, &grid, &traj, seed))?;
    let mut bin = Vec::new();
    write_snapshots(&mut bin, &grid, &traj, seed)?;
    out.bytes("trajectory.bin", &bin)?;

    Ok(ExperimentOutput::from_reports(vec![heat_report, mean_report])
        .with("heat_sup_error", (worst[1] - worst[2]).abs())
        .with("max_abs_z", worst_z.0.abs())
        .with("steps", (p.t / cfg.dt).round()))
}

/// Four-point Lagrange interpolation on a periodic cell-centered grid.
fn periodic_interpolate(field: &Field, x: f64) -> f64 {
    let g = &field.grid;
    let n = g.n_cells() as i64;
    let s = (x - g.x_min()) / g.dx() - 0.5;
    let i = s.floor() as i64;
    let u = s - i as f64;
    let v = |k: i64| field.values[(i + k).rem_euclid(n) as usize];
    let w = [-u * (u - 1.0) * (u - 2.0) / 6.0, (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0, -(u + 1.0) * u * (u - 2.0) / 2.0, (u + 1.0) * u * (u - 1.0) / 6.0];
    w[0] * v(-1) + w[1] * v(0) + w[2] * v(1) + w[3] * v(2)
}

fn burgers(p: &BurgersParams, seed: u64, out: &ArtifactDir) -> Result<ExperimentOutput> {
    let phi = build_mollifier(p.shape, p.epsilon)?;
    let kernels = derive_kernels(&phi)?;
    let ring = |dx: f64| Grid1D::new(-0.5 * p.length, 0.5 * p.length, (p.length / dx).round() as usize, Boundary::Periodic);
    let grid = ring(p.dx)?;
    let mut reports = Vec::new();

    let cfg = SolverConfig::for_grid(&grid, p.t);
    let flat = solve_smoothed_burgers(&Field::constant(grid, p.constant), &kernels, &mut Silent, &cfg)?;
    let drift = flat.values.iter().map(|v| (v - p.constant).abs()).fold(0.0, f64::max);
    reports.push(VerificationReport::exact("burgers constant is steady", drift, 0.0, 1e-12));

    // self-convergence of the noise-off flow against a grid eight times finer
    let wave = std::f64::consts::TAU / p.length;
    let solve_sine = |dx: f64| -> Result<Field> {
        let g = ring(dx)?;
        let u0 = Field::from_fn(g, |x| p.sine_amplitude * (wave * x).sin());
        solve_smoothed_burgers(&u0, &kernels, &mut Silent, &SolverConfig::for_grid(&g, p.t))
    };
    let reference = solve_sine(p.dx / 8.0)?;
    let errors: Vec<f64> = [1.0, 0.5]
        .iter()
        .map(|&f| {
            let u = solve_sine(p.dx * f)?;
            Ok(u.grid.centers().zip(&u.values).map(|(x, v)| (v - periodic_interpolate(&reference, x)).abs()).fold(0.0, f64::max))
        })
        .collect::<Result<_>>()?;
    let order = (errors[0] / errors[1]).log2();
    reports.push(
        range_report("burgers self-convergence order", order, 1.5, f64::INFINITY)
            .with_param("error_dx", errors[0])
            .with_param("error_dx_half", errors[1]),
    );

    // two-point function of the stationary start before and after the flow
    let stencil = Stencil::new(&phi, p.dx)?;
    let n = grid.n_cells();
    let lag_products = |u: &[f64]| -> Vec<f64> {
        p.lags.iter().map(|&k| (0..n).map(|i| u[i] * u[(i + k) % n]).sum::<f64>() / n as f64).collect()
    };
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..p.replicas)
        .into_par_iter()
        .map(|r| {
            let init = sample_initial_replica(InitialKind::Smoothed(phi), &grid, seed, r as u64)?;
            let mut eta = MollifiedStream::new(&grid, cfg.dt, &phi, seed, r as u64)?;
            let u = solve_smoothed_burgers(&init.u0, &kernels, &mut eta, &cfg)?;
            Ok((lag_products(&init.u0.values), lag_products(&u.values)))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (j, &k) in p.lags.iter().enumerate() {
        let before: Vec<f64> = pairs.iter().map(|(a, _)| a[j]).collect();
        let after: Vec<f64> = pairs.iter().map(|(_, b)| b[j]).collect();
        let mut r = VerificationReport::from_pairs_with(format!("burgers covariance lag {k}"), &after, &before, 2000, child_seed(seed, k as u64), 5.0)
            .with_param("lag", k as f64 * p.dx)
            .with_param("lattice_covariance", stencil.covariance(k as i64))
            .with_param("t", p.t);
        r.pass = r.diff.abs() <= 5.0 * r.se;
        rows.push(vec![k as f64 * p.dx, stencil.covariance(k as i64), r.rhs, r.lhs, r.se]);
        reports.push(r);
    }
    out.table("covariance.csv", &["lag", "lattice", "initial", "final", "se"], &rows)?;
    Ok(ExperimentOutput::from_reports(reports).with("self_convergence_order", order))
}

fn stein(p: &SteinParams, seed: u64) -> Result<ExperimentOutput> {
    let (reports, skipped) = match p.mode {
        SteinMode::ExactGaussian => {
            let mut r = stream(seed, 0, Purpose::Auxiliary);
            let sd = p.sigma_sq.sqrt();
            let y: Vec<f64> = (0..p.samples).map(|_| sd * r.sample::<f64, _>(StandardNormal)).collect();
            let o = stein_residual(&y, p.sigma_sq, &FFamily::standard(sd), p.resamples, child_seed(seed, 1))?;
            (o.reports, o.skipped)
        }
        SteinMode::She => {
            let cfg = StationarityConfig::standard(p.t, p.dx, p.replicas, seed);
            let o = stationarity_experiment(&cfg, p.resamples)?;
            let skipped = o.stein.iter().flat_map(|s| s.skipped.clone()).collect();
            (o.reports(), skipped)
        }
    };
    let mut o = ExperimentOutput::from_reports(reports).with("mode", p.mode).with("skipped", &skipped);
    o.pass &= skipped.is_empty();
    Ok(o)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Identity {
    Smoothed,
    Initial,
    Gamma,
}

fn ibp(p: &IbpParams, seed: u64, out: &ArtifactDir, which: Identity) -> Result<ExperimentOutput> {
    let outer = ScaledFunction::new(p.outer_function()?, p.outer_scale);
    let mut reports = Vec::new();
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for (i, &w) in p.widths.iter().enumerate() {
        let initial = match which {
            Identity::Smoothed => InitialData::Height(InitialHeight::Sine { amplitude: p.h0_amplitude, wavenumber: p.h0_wavenumber }),
            Identity::Initial | Identity::Gamma => InitialData::SmoothedWhite { width: w },
        };
        let mut cfg = IbpConfig::new(w, initial, p.paths, p.replicas, child_seed(seed, i as u64));
        cfg.t = p.t;
        cfg.x = p.x;
        cfg.shape = p.shape;
        cfg.outer = outer;
        cfg.node_spacing = p.node_spacing;
        cfg.bootstrap_resamples = p.resamples;
        let mut report = match which {
            Identity::Smoothed => verify_prop_smoothed(&cfg)?.report,
            Identity::Initial => verify_prop_init(&cfg)?.report,
            Identity::Gamma => {
                let g = estimate_gamma(&cfg)?;
                summary.push(serde_json::json!({ "width": w, "term1": g.term1, "term2": g.term2, "total": g.total }));
                g.report
            }
        };
        report.name = format!("{} width={w}", report.name);
        rows.push(vec![w, report.lhs, report.rhs, report.diff, report.se, report.pass as u8 as f64]);
        reports.push(report);
    }
    out.table("identity_by_width.csv", &["width", "lhs", "rhs", "diff", "se", "pass"], &rows)?;
    let mut o = ExperimentOutput::from_reports(reports);
    if rows.len() >= 2 {
        let fit = stats::linear_fit(&rows.iter().map(|r| r[0]).collect::<Vec<_>>(), &rows.iter().map(|r| r[3]).collect::<Vec<_>>());
        o = o.with("diff_at_zero_width", fit.intercept).with("diff_slope_in_width", fit.slope);
    }
    if which == Identity::Gamma {
        o = o.with("gamma", summary);
    }
    Ok(o)
}

fn ito(p: &ItoParams, seed: u64, out: &ArtifactDir) -> Result<ExperimentOutput> {
    let kernels = derive_kernels(&build_mollifier(p.shape, p.epsilon)?)?;
    let c = ito_convergence(p.x1, p.x2, p.t, &p.dts, p.pairs, &kernels, seed)?;
    let rows: Vec<Vec<f64>> = (0..c.dts.len()).map(|j| vec![c.dts[j], c.rms[j], c.rms_se[j]]).collect();
    out.table("ito_residual.csv", &["dt", "rms", "rms_se"], &rows)?;
    let mut by_dt: Vec<(f64, f64)> = c.dts.iter().copied().zip(c.rms.iter().copied()).collect();
    by_dt.sort_by(|a, b| b.0.total_cmp(&a.0));
    let increases = by_dt.windows(2).filter(|w| w[1].1 >= w[0].1).count();
    let reports = vec![
        range_report("ito residual order in dt", c.order(), p.min_order, f64::INFINITY)
            .with_param("order_se", c.fit.slope_se)
            .with_param("pairs", p.pairs),
        VerificationReport::exact("ito residual decreases with dt", increases as f64, 0.0, 0.0),
    ];
    Ok(ExperimentOutput::from_reports(reports).with("order", c.order()).with("rms", &c.rms))
}

fn error_scaling(p: &ErrorScalingParams, seed: u64, out: &ArtifactDir) -> Result<ExperimentOutput> {
    let mut base = ErrorTermConfig::new(p.t, p.x1, p.x2, p.eps[0], p.paths, seed);
    base.shape = p.shape;
    base.bootstrap_resamples = p.resamples;
    let mut reports = Vec::new();
    let mut o = ExperimentOutput::default();
    if p.baseline {
        let quiet = ErrorTermConfig {
            noise: false,
            paths: p.baseline_paths,
            realizations: p.baseline_realizations,
            seed: child_seed(seed, 0),
            ..base.clone()
        };
        let r = scaling_study(&quiet, &p.eps)?;
        out.csv("error_scaling_baseline.csv", |buf| r.write_csv(buf))?;
        reports.push(
            range_report("error term decay slope (noise off)", r.fit.slope, p.slope_min, p.slope_max)
                .with_param("slope_se", r.fit.slope_se)
                .with_param("paths", p.baseline_paths),
        );
        o = o.with("baseline_slope", r.fit.slope).with("baseline_slope_se", r.fit.slope_se).with("baseline_log_corrected_slope", r.log_corrected_fit.slope);
    }
    if p.noisy {
        let noisy = ErrorTermConfig { noise: true, realizations: p.realizations, seed: child_seed(seed, 1), ..base.clone() };
        let r = scaling_study(&noisy, &p.eps)?;
        out.csv("error_scaling.csv", |buf| r.write_csv(buf))?;
        reports.push(
            VerificationReport::exact("error term decays monotonically (full noise)", r.non_monotone as u8 as f64, 0.0, 0.0)
                .with_param("paths", p.paths)
                .with_param("realizations", p.realizations),
        );
        o = o.with("slope", r.fit.slope).with("slope_se", r.fit.slope_se).with("log_corrected_slope", r.log_corrected_fit.slope);
    }
    let summary = o.summary;
    let mut o = ExperimentOutput::from_reports(reports);
    o.summary = summary;
    Ok(o)
}

fn lattice(p: &LatticeParams, out: &ArtifactDir) -> Result<ExperimentOutput> {
    let library: Vec<_> = polynomial_library().into_iter().filter(|(_, f)| f.degree() <= p.max_degree).collect();
    let mut reports = Vec::new();
    let mut rows = Vec::new();
    for &n in &p.sizes {
        for (idx, (name, f)) in library.iter().enumerate() {
            if f.max_site().is_some_and(|s| s >= n) {
                continue;
            }
            let v = generator_pairing_exact(f, n)?;
            rows.push(vec![idx as f64, n as f64, f.degree() as f64, v]);
            reports.push(VerificationReport::exact(format!("ring pairing {name} N={n}"), v, 0.0, p.tolerance));
        }
    }
    out.table("pairings.csv", &["polynomial", "n", "degree", "pairing"], &rows)?;
    let names: Vec<&str> = library.iter().map(|(n, _)| n.as_str()).collect();
    Ok(ExperimentOutput::from_reports(reports).with("polynomials", names))
}

/// Local test functions on up to four sites.
pub fn asep_test_functions() -> Vec<(String, LocalFunction)> {
    vec![
        ("eta0".into(), LocalFunction::product(&[0])),
        ("eta0 eta1".into(), LocalFunction::product(&[0, 1])),
        ("eta0 eta2".into(), LocalFunction::product(&[0, 2])),
        ("eta0 eta1 eta2".into(), LocalFunction::product(&[0, 1, 2])),
        ("local max at 1".into(), LocalFunction::from_fn(0, 3, |s| (s[1] as f64) * (1.0 - s[2] as f64) * (1.0 - s[0] as f64))),
        ("nonlinear window".into(), LocalFunction::from_fn(0, 4, |s| (s[0] as f64 + 2.0 * s[1] as f64 - s[3] as f64).powi(2))),
    ]
}

fn asep_invariance(p: &AsepInvarianceParams, out: &ArtifactDir) -> Result<ExperimentOutput> {
    let mut reports = Vec::new();
    let mut rows = Vec::new();
    for (idx, (name, f)) in asep_test_functions().into_iter().enumerate() {
        let (start, width) = f.window();
        if start + width > p.n {
            continue;
        }
        let v = asep_exact_invariance(p.n, p.rho, p.p, p.q, &f)?;
        rows.push(vec![idx as f64, p.n as f64, p.rho, p.p, p.q, v]);
        reports.push(
            VerificationReport::exact(format!("asep pairing {name} N={} rho={} p={} q={}", p.n, p.rho, p.p, p.q), v, 0.0, p.tolerance)
                .with_param("n", p.n)
                .with_param("rho", p.rho),
        );
    }
    out.table("asep_pairings.csv", &["function", "n", "rho", "p", "q", "pairing"], &rows)?;
    Ok(ExperimentOutput::from_reports(reports))
}

fn asep_sim(p: &AsepSimParams, seed: u64, out: &ArtifactDir) -> Result<ExperimentOutput> {
    let (right, left) = wasep_rates(p.epsilon);
    let eta0 = OccupancyConfig::bernoulli(p.n, p.rho, seed, 0)?;
    let micro = p.t_end / (p.epsilon * p.epsilon);
    let traj = asep_simulate(eta0, right, left, micro, seed, 0)?;
    let times: Vec<f64> = (0..p.frames).map(|k| if p.frames == 1 { p.t_end } else { p.t_end * k as f64 / (p.frames - 1) as f64 }).collect();
    let profiles = wasep_height(&traj, p.epsilon, &times)?;
    out.csv("heights.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["t", "x", "h"])?;
        for prof in &profiles {
            prof.write_csv(&mut w)?;
        }
        w.flush()?;
        Ok(())
    })?;
    let last = traj.final_state();
    let reports = vec![VerificationReport::exact("asep particle number conserved", last.particles() as f64, eta0.particles() as f64, 0.0)];
    Ok(ExperimentOutput::from_reports(reports)
        .with("events", traj.events.len())
        .with("rates", (right, left))
        .with("microscopic_time", micro))
}

fn height_identities(p: &HeightIdentityParams, out: &ArtifactDir) -> Result<ExperimentOutput> {
    let mut reports = Vec::new();
    let mut rows = Vec::new();
    for &eps in &p.eps {
        for c in local_pattern_identities(eps) {
            let tag = format!("slopes=({},{}) eps={eps}", c.slopes.0, c.slopes.1);
            reports.push(VerificationReport::exact(format!("min - max {tag}"), c.min_minus_max, c.curvature_side, 0.0));
            reports.push(VerificationReport::exact(format!("min + max {tag}"), c.min_plus_max, c.gradient_side, 0.0));
            rows.push(vec![eps, c.slopes.0 as f64, c.slopes.1 as f64, c.min_minus_max, c.curvature_side, c.min_plus_max, c.gradient_side]);
        }
    }
    out.table(
        "patterns.csv",
        &["eps", "slope_left", "slope_right", "min_minus_max", "curvature_side", "min_plus_max", "gradient_side"],
        &rows,
    )?;
    Ok(ExperimentOutput::from_reports(reports))
}

fn cancellation(p: &CancellationParams, seed: u64) -> Result<ExperimentOutput> {
    let phi = build_mollifier(p.shape, p.epsilon)?;
    let psi = build_mollifier(p.shape, p.psi_width)?;
    let cfg = CancellationConfig {
        t: p.t,
        x: p.x,
        paths: p.paths,
        environments: p.environments,
        grid_points: p.grid_points,
        span: p.span,
        bootstrap_resamples: p.resamples,
        seed,
    };
    Ok(ExperimentOutput::from_reports(cancellation_suite(&phi, &psi, &cfg)?))
}
