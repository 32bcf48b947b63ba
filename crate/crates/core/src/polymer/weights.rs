use crate::error::{LabError, Result};
use crate::grid::{Field, Grid1D};
use crate::noise::NoiseField;

use super::environment::{interpolate, Environment};
use super::paths::PathEnsemble;

/// Fraction of `M` below which an ensemble is declared degenerate.
pub const ESS_FLOOR: f64 = 0.01;

/// Paths with Feynman-Kac log-weights
/// `sum_k eta(t - s_k, X_k) dt - R(0) t / 2 + h0(X_t)`.
#[derive(Debug, Clone)]
pub struct WeightedEnsemble {
    pub log_weights: Vec<f64>,
    /// Self-normalized weights.
    pub normalized: Vec<f64>,
    pub ess: f64,
    /// `log` of the mean weight, the estimate of `log Z(t, x)`.
    pub log_z: f64,
    /// Path steps that fell outside the noise grid and were clamped.
    pub clamped: usize,
    pub degenerate: bool,
}

impl WeightedEnsemble {
    pub fn from_log_weights(log_weights: Vec<f64>, clamped: usize) -> Self {
        let m = log_weights.len() as f64;
        let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = log_weights.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = crate::stats::pairwise_sum(&raw);
        let normalized: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let sq: f64 = normalized.iter().map(|w| w * w).sum();
        let ess = 1.0 / sq;
        let log_z = max + (total / m).ln();
        Self { log_weights, normalized, ess, log_z, clamped, degenerate: ess < ESS_FLOOR * m }
    }

    pub fn ensure_healthy(&self) -> Result<()> {
        if self.degenerate {
            Err(LabError::DegenerateEnsemble { ess: self.ess, paths: self.log_weights.len() })
        } else {
            Ok(())
        }
    }
}

/// Feynman-Kac weights of stored paths in a noise environment, with the
/// initial height supplied as a function.
pub fn fk_weight_with(ensemble: &PathEnsemble, env: &Environment, h0: impl Fn(f64) -> f64) -> Result<WeightedEnsemble> {
    if ensemble.n_steps != env.n_steps() || (ensemble.dt - env.dt()).abs() > 1e-12 * ensemble.dt {
        return Err(LabError::invalid("ensemble", "path and noise time grids differ"));
    }
    let dt = ensemble.dt;
    let correction = -0.5 * env.r0() * ensemble.horizon;
    let mut clamped = 0usize;
    let log_weights = (0..ensemble.len())
        .map(|k| {
            let mut x = ensemble.origin;
            let mut acc = 0.0;
            for (step, d) in ensemble.increments(k).iter().enumerate() {
                if !env.is_quiet() {
                    let loc = env.locate(x);
                    clamped += loc.clamped as usize;
                    acc += env.eta_at(step, loc) * dt;
                }
                x += d;
            }
            acc + correction + h0(x)
        })
        .collect();
    let w = WeightedEnsemble::from_log_weights(log_weights, clamped);
    if w.log_weights.iter().any(|l| !l.is_finite()) {
        return Err(LabError::invalid("h0", "log-weights are not finite"));
    }
    Ok(w)
}

/// Feynman-Kac weights for a smoothed noise field and a lattice initial height.
pub fn fk_weight(ensemble: &PathEnsemble, eta: &NoiseField, h0: &Field, r0: f64) -> Result<WeightedEnsemble> {
    let env = Environment::from_field(eta, r0);
    fk_weight_with(ensemble, &env, |x| interpolate(h0, x))
}

#[derive(Debug, Clone)]
pub struct DensityEstimate {
    pub density: Field,
    /// All weight landed in a single bin.
    pub concentrated: bool,
}

/// Weighted histogram of path endpoints, normalized to unit mass on `bins`.
pub fn endpoint_density(weighted: &WeightedEnsemble, ensemble: &PathEnsemble, bins: &Grid1D) -> Result<DensityEstimate> {
    let mut values = vec![0.0; bins.n_cells()];
    let dx = bins.dx();
    for (k, w) in weighted.normalized.iter().enumerate() {
        let y = ensemble.endpoint(k);
        let s = ((y - bins.x_min()) / dx).floor();
        if s >= 0.0 && (s as usize) < values.len() {
            values[s as usize] += w;
        }
    }
    let mass: f64 = values.iter().sum();
    if !(mass > 0.0) {
        return Err(LabError::invalid("bins", "no endpoint falls inside the bins"));
    }
    let concentrated = values.iter().filter(|&&v| v > 0.0).count() == 1 && ensemble.len() > 100;
    for v in values.iter_mut() {
        *v /= mass * dx;
    }
    Ok(DensityEstimate { density: Field { grid: *bins, values }, concentrated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Boundary;
    use crate::polymer::paths::sample_paths;
    use crate::stats;

    fn quiet(t: f64, dt: f64) -> Environment {
        let g = Grid1D::centered(5.0, 0.1, Boundary::Truncated).unwrap();
        Environment::quiet(g, dt, crate::spde::steps_for(t, dt).unwrap(), 0.0)
    }

    #[test]
    fn quiet_environment_gives_uniform_weights() {
        let e = sample_paths(0.0, 0.5, 0.01, 500, 1).unwrap();
        let g = Grid1D::centered(5.0, 0.1, Boundary::Truncated).unwrap();
        let env = Environment::quiet(g, 0.01, 50, 2.0);
        let w = fk_weight_with(&e, &env, |_| 0.0).unwrap();
        assert!(w.log_weights.iter().all(|&l| (l + 0.5).abs() < 1e-15));
        assert!((w.ess - 500.0).abs() < 1e-9);
        assert!((w.normalized.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_reward_matches_gaussian_mgf() {
        let (x, t) = (0.2, 0.5);
        let e = sample_paths(x, t, 0.05, 20000, 3).unwrap();
        let w = fk_weight_with(&e, &quiet(t, 0.05), |y| y).unwrap();
        let z: Vec<f64> = w.log_weights.iter().map(|l| l.exp()).collect();
        let target = (x + t / 2.0f64).exp();
        assert!((stats::mean(&z) - target).abs() < 5.0 * stats::std_error(&z));
        assert!((w.log_z - stats::mean(&z).ln()).abs() < 1e-12);
    }

    #[test]
    fn free_endpoint_density_is_heat_kernel() {
        let t = 0.5;
        let e = sample_paths(0.0, t, 0.05, 100_000, 4).unwrap();
        let w = fk_weight_with(&e, &quiet(t, 0.05), |_| 0.0).unwrap();
        let bins = Grid1D::centered(4.0, 0.1, Boundary::Truncated).unwrap();
        let d = endpoint_density(&w, &e, &bins).unwrap();
        assert!((d.density.sum_dx() - 1.0).abs() < 1e-8);
        let l1: f64 = bins
            .centers()
            .zip(&d.density.values)
            .map(|(y, p)| (p - (-y * y / (2.0 * t)).exp() / (2.0 * std::f64::consts::PI * t).sqrt()).abs())
            .sum::<f64>()
            * bins.dx();
        assert!(l1 < 0.05, "L1 = {l1}");
        assert!(!d.concentrated);
    }

    #[test]
    fn gaussian_reward_density_is_conjugate_gaussian() {
        // p_t(x - y) exp(-y^2 / 2) is Gaussian with mean x / (1 + t) and variance t / (1 + t).
        let (x, t) = (0.4, 0.5);
        let e = sample_paths(x, t, 0.05, 100_000, 5).unwrap();
        let w = fk_weight_with(&e, &quiet(t, 0.05), |y| -0.5 * y * y).unwrap();
        let bins = Grid1D::centered(4.0, 0.1, Boundary::Truncated).unwrap();
        let d = endpoint_density(&w, &e, &bins).unwrap();
        let (m, v) = (x / (1.0 + t), t / (1.0 + t));
        let l1: f64 = bins
            .centers()
            .zip(&d.density.values)
            .map(|(y, p)| (p - (-(y - m).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()).abs())
            .sum::<f64>()
            * bins.dx();
        assert!(l1 < 0.05, "L1 = {l1}");
    }

    #[test]
    fn short_horizon_density_concentrates() {
        let dt = 0.001;
        let e = sample_paths(0.3, dt, dt, 5000, 6).unwrap();
        let w = fk_weight_with(&e, &quiet(dt, dt), |_| 0.0).unwrap();
        let bins = Grid1D::new(-1.0, 1.0, 2000, Boundary::Truncated).unwrap();
        let d = endpoint_density(&w, &e, &bins).unwrap();
        let near: f64 = bins
            .centers()
            .zip(&d.density.values)
            .filter(|(y, _)| (y - 0.3).abs() < 4.0 * dt.sqrt())
            .map(|(_, p)| p * bins.dx())
            .sum();
        assert!(near >= 0.99);
    }

    #[test]
    fn mismatched_time_grids_are_rejected() {
        let e = sample_paths(0.0, 0.5, 0.01, 10, 1).unwrap();
        assert!(fk_weight_with(&e, &quiet(0.5, 0.05), |_| 0.0).is_err());
    }
}
