//! Three symmetry cancellations: `int phi phi' = 0`, the vanishing of an odd
//! functional under two exchangeable polymers, and the symmetrized primitive
//! identity for the initial-data kernel.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kernels::{derive_init_kernel, derive_kernels, Mollifier};
use crate::polymer::{environment_grid, Environment, PathSampler, WeightedEnsemble};
use crate::quadrature::integrate;
use crate::rng::child_seed;
use crate::stats;

use super::report::VerificationReport;

/// Tolerance for the two deterministic checks.
pub const EXACT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CancellationConfig {
    pub t: f64,
    pub x: f64,
    pub paths: usize,
    /// Independent noise environments.
    pub environments: usize,
    /// Side length of the `(w, z)` grid for the primitive identity.
    pub grid_points: usize,
    /// The `(w, z)` grid spans `[-span, span]^2`.
    pub span: f64,
    pub bootstrap_resamples: usize,
    pub seed: u64,
}

impl Default for CancellationConfig {
    fn default() -> Self {
        Self {
            t: 0.25,
            x: 0.0,
            paths: 10_000,
            environments: 24,
            grid_points: 21,
            span: 1.0,
            bootstrap_resamples: 2000,
            seed: 2024,
        }
    }
}

/// `int phi(z) phi'(z) dz` by Gauss-Legendre quadrature over the support.
pub fn mollifier_slope_integral(phi: &Mollifier) -> f64 {
    let e = phi.epsilon();
    integrate(|z| phi.value(z) * phi.derivative(z), -e, e, 256, 16)
}

/// Check (i).
pub fn check_slope_integral(phi: &Mollifier) -> VerificationReport {
    VerificationReport::exact("int phi phi' = 0", mollifier_slope_integral(phi), 0.0, EXACT_TOLERANCE)
        .with_param("epsilon", phi.epsilon())
}

/// Check (ii): for two independent weighted ensembles started at the same point
/// in one environment, `int_0^t E[R'(X1_s - X2_s)] ds` estimated by pairing
/// path `k` of one ensemble with path `k` of the other. Swapping the ensembles
/// flips the sign of every term, so the mean over environments is zero.
pub fn check_exchangeable_odd(phi: &Mollifier, cfg: &CancellationConfig) -> Result<VerificationReport> {
    let kernels = derive_kernels(phi)?;
    let grid = environment_grid(cfg.x, cfg.x, cfg.t, phi.epsilon())?;
    let dt = (0.25 * phi.epsilon()).powi(2).min(cfg.t / 50.0);
    let dt = cfg.t / (cfg.t / dt).ceil();
    let values: Vec<f64> = (0..cfg.environments)
        .into_par_iter()
        .map(|r| {
            let rseed = child_seed(cfg.seed, r as u64);
            let s1 = PathSampler::new(cfg.x, cfg.t, dt, child_seed(rseed, 1))?;
            let s2 = PathSampler::new(cfg.x, cfg.t, dt, child_seed(rseed, 2))?;
            let n = s1.n_steps;
            let env = Environment::sample_field_only(grid, dt, n, phi, cfg.seed, r as u64)?;
            let correction = -0.5 * env.r0() * cfg.t;
            let log_weight = |p: &[f64]| {
                let acc: f64 = p[..n].iter().enumerate().map(|(k, &x)| env.eta_at(k, env.locate(x))).sum();
                acc * dt + correction
            };
            let (mut p1, mut p2) = (vec![0.0; n + 1], vec![0.0; n + 1]);
            let mut lw1 = Vec::with_capacity(cfg.paths);
            let mut lw2 = Vec::with_capacity(cfg.paths);
            let mut odd = Vec::with_capacity(cfg.paths);
            for k in 0..cfg.paths {
                s1.positions(k, &mut p1);
                s2.positions(k, &mut p2);
                lw1.push(log_weight(&p1));
                lw2.push(log_weight(&p2));
                let integral: f64 =
                    p1[..n].iter().zip(&p2[..n]).map(|(a, b)| kernels.covariance_derivative(a - b)).sum::<f64>() * dt;
                odd.push(integral);
            }
            let w1 = WeightedEnsemble::from_log_weights(lw1, 0);
            let w2 = WeightedEnsemble::from_log_weights(lw2, 0);
            let terms: Vec<f64> = (0..cfg.paths).map(|k| w1.normalized[k] * w2.normalized[k] * odd[k]).collect();
            Ok(cfg.paths as f64 * stats::pairwise_sum(&terms))
        })
        .collect::<Result<_>>()?;
    let zeros = vec![0.0; values.len()];
    Ok(VerificationReport::from_pairs("exchangeable odd functional", &values, &zeros, cfg.bootstrap_resamples, cfg.seed)
        .with_param("t", cfg.t)
        .with_param("x", cfg.x)
        .with_param("paths", cfg.paths)
        .with_param("epsilon", phi.epsilon()))
}

/// `g(w, z) = a(z - w) + a(w)` for the initial-data kernel primitive `a`.
pub fn g_function(a: impl Fn(f64) -> f64, w: f64, z: f64) -> f64 {
    a(z - w) + a(w)
}

/// Check (iii): `g(w,z) + g(z,w) = int_0^w A + int_0^z A` on a square grid,
/// with the right side obtained by quadrature of `A`. Reports the worst point.
pub fn check_primitive_identity(psi: &Mollifier, cfg: &CancellationConfig) -> Result<VerificationReport> {
    let kernel = derive_init_kernel(psi)?;
    let n = cfg.grid_points.max(2);
    let nodes: Vec<f64> = (0..n).map(|i| -cfg.span + 2.0 * cfg.span * i as f64 / (n - 1) as f64).collect();
    let radius = kernel.support_radius();
    let integral_of_a = |w: f64| -> f64 {
        let end = w.clamp(-radius, radius);
        let (lo, hi, sign) = if end >= 0.0 { (0.0, end, 1.0) } else { (end, 0.0, -1.0) };
        // A vanishes beyond its support
        sign * integrate(|y| kernel.covariance(y), lo, hi, 512, 12)
    };
    let prim: Vec<f64> = nodes.iter().map(|&w| integral_of_a(w)).collect();
    let a = |x: f64| kernel.primitive(x);
    let mut worst = (0.0f64, 0.0f64);
    for (i, &w) in nodes.iter().enumerate() {
        for (j, &z) in nodes.iter().enumerate() {
            let lhs = g_function(a, w, z) + g_function(a, z, w);
            let rhs = prim[i] + prim[j];
            if (lhs - rhs).abs() >= (worst.0 - worst.1).abs() {
                worst = (lhs, rhs);
            }
        }
    }
    Ok(VerificationReport::exact("g(w,z) + g(z,w) = int_0^w A + int_0^z A", worst.0, worst.1, EXACT_TOLERANCE)
        .with_param("grid_points", n)
        .with_param("span", cfg.span)
        .with_param("psi_width", psi.epsilon()))
}

/// All three checks.
pub fn cancellation_suite(phi: &Mollifier, psi: &Mollifier, cfg: &CancellationConfig) -> Result<Vec<VerificationReport>> {
    Ok(vec![check_slope_integral(phi), check_exchangeable_odd(phi, cfg)?, check_primitive_identity(psi, cfg)?])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{build_mollifier, MollifierShape};

    #[test]
    fn slope_integral_vanishes_for_both_shapes() {
        for shape in [MollifierShape::Bump, MollifierShape::TriangleConvolved] {
            for eps in [0.4, 0.1, 0.02] {
                let r = check_slope_integral(&build_mollifier(shape, eps).unwrap());
                assert!(r.pass, "{r:?}");
            }
        }
    }

    #[test]
    fn primitive_identity_on_grid_and_diagonal() {
        let cfg = CancellationConfig::default();
        for shape in [MollifierShape::Bump, MollifierShape::TriangleConvolved] {
            let psi = build_mollifier(shape, 0.2).unwrap();
            let r = check_primitive_identity(&psi, &cfg).unwrap();
            assert!(r.pass, "{r:?}");
            let k = derive_init_kernel(&psi).unwrap();
            for w in [-0.3, 0.05, 0.7] {
                let a = |x: f64| k.primitive(x);
                assert!((2.0 * g_function(a, w, w) - 2.0 * k.primitive(w)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn exchangeable_odd_functional_small_run() {
        let phi = build_mollifier(MollifierShape::Bump, 0.2).unwrap();
        let cfg = CancellationConfig { paths: 500, environments: 16, ..Default::default() };
        let r = check_exchangeable_odd(&phi, &cfg).unwrap();
        assert!(r.se > 0.0);
        assert!(r.pass, "{r:?}");
    }
}
