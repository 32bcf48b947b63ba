use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::kernels::KernelSet;
use crate::rng::child_seed;
use crate::stats::{self, LinearFit};

use super::paths::PathSampler;

/// Step indices of the two stopping times of a path pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoppingPair {
    /// First step at which the difference enters the kernel support.
    pub sigma_idx: usize,
    /// First step at which the difference hits zero or changes sign.
    pub tau_idx: usize,
}

/// Both paths are position sequences of equal length `n_steps + 1`.
pub fn stopping_times(path1: &[f64], path2: &[f64], support_radius: f64) -> StoppingPair {
    assert_eq!(path1.len(), path2.len(), "paths must share the time grid");
    let n = path1.len() - 1;
    let diff = |k: usize| path1[k] - path2[k];
    let sigma_idx = (0..=n).find(|&k| diff(k).abs() <= support_radius).unwrap_or(n);
    let d0 = diff(0);
    let tau_idx = if d0 == 0.0 {
        0
    } else {
        (1..=n).find(|&k| diff(k) == 0.0 || diff(k).signum() != d0.signum()).unwrap_or(n)
    };
    StoppingPair { sigma_idx, tau_idx }
}

/// Ito-formula residual for `D = X2 - X1`:
/// `sum R'(D_k) dt - [r(D_n) - r(D_0) - sum R(D_k) (D_{k+1} - D_k)]`.
///
/// The difference of two independent Brownian paths has quadratic variation
/// rate 2, which cancels the 1/2 of Ito's formula.
pub fn ito_residual(path1: &[f64], path2: &[f64], dt: f64, kernels: &KernelSet) -> f64 {
    ito_residual_with_rate(path1, path2, dt, kernels, 2.0)
}

/// As [`ito_residual`], for a difference process with quadratic variation
/// rate `qv_rate` (0 for deterministic paths).
pub fn ito_residual_with_rate(path1: &[f64], path2: &[f64], dt: f64, kernels: &KernelSet, qv_rate: f64) -> f64 {
    assert_eq!(path1.len(), path2.len(), "paths must share the time grid");
    let n = path1.len() - 1;
    let diff = |k: usize| path2[k] - path1[k];
    let mut drift = 0.0;
    let mut martingale = 0.0;
    for k in 0..n {
        let d = diff(k);
        drift += kernels.covariance_derivative(d);
        martingale += kernels.covariance(d) * (diff(k + 1) - d);
    }
    let boundary = kernels.primitive(diff(n)) - kernels.primitive(diff(0));
    0.5 * qv_rate * drift * dt - (boundary - martingale)
}

/// Ito sum of `R(X1 - X2) d(X1 - X2)` over path steps `[from, to)`.
pub fn stopped_integral(path1: &[f64], path2: &[f64], from: usize, to: usize, kernels: &KernelSet) -> f64 {
    (from..to)
        .map(|k| {
            let d = path1[k] - path2[k];
            kernels.covariance(d) * ((path1[k + 1] - path2[k + 1]) - d)
        })
        .sum()
}

/// RMS Ito residual per time step, with the fitted order in `dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItoConvergence {
    pub dts: Vec<f64>,
    pub rms: Vec<f64>,
    /// Standard error of each mean square, propagated to the RMS.
    pub rms_se: Vec<f64>,
    pub pairs: usize,
    /// Slope of `log rms` against `log dt`.
    pub fit: LinearFit,
}

impl ItoConvergence {
    pub fn order(&self) -> f64 {
        self.fit.slope
    }
}

/// Residuals of `pairs` Brownian pairs from `(x1, x2)` on `[0, t]`, sampled at the
/// finest step and observed on every coarser step of `dts`, so all steps see
/// the same paths. Each step must be a whole multiple of the finest one.
pub fn ito_convergence(x1: f64, x2: f64, t: f64, dts: &[f64], pairs: usize, kernels: &KernelSet, seed: u64) -> Result<ItoConvergence> {
    if dts.len() < 2 || pairs < 2 {
        return Err(LabError::invalid("dts", "need at least two steps and two pairs"));
    }
    let fine = dts.iter().copied().fold(f64::INFINITY, f64::min);
    let strides = dts
        .iter()
        .map(|&dt| {
            let r = dt / fine;
            if (r - r.round()).abs() > 1e-9 {
                Err(LabError::invalid("dts", format!("{dt} is not a multiple of {fine}")))
            } else {
                Ok(r.round() as usize)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let s1 = PathSampler::new(x1, t, fine, child_seed(seed, 1))?;
    let s2 = PathSampler::new(x2, t, fine, child_seed(seed, 2))?;
    let n = s1.n_steps;
    if let Some(&bad) = strides.iter().find(|&&k| n % k != 0) {
        return Err(LabError::invalid("dts", format!("stride {bad} does not divide {n} steps")));
    }
    let squares: Vec<Vec<f64>> = (0..pairs)
        .into_par_iter()
        .map(|k| {
            let (mut p1, mut p2) = (vec![0.0; n + 1], vec![0.0; n + 1]);
            s1.positions(k, &mut p1);
            s2.positions(k, &mut p2);
            strides
                .iter()
                .zip(dts)
                .map(|(&stride, &dt)| {
                    let c1: Vec<f64> = p1.iter().step_by(stride).copied().collect();
                    let c2: Vec<f64> = p2.iter().step_by(stride).copied().collect();
                    ito_residual(&c1, &c2, dt, kernels).powi(2)
                })
                .collect()
        })
        .collect();
    let mut rms = Vec::with_capacity(dts.len());
    let mut rms_se = Vec::with_capacity(dts.len());
    for j in 0..dts.len() {
        let col: Vec<f64> = squares.iter().map(|row| row[j]).collect();
        let ms = stats::mean(&col);
        rms.push(ms.sqrt());
        rms_se.push(stats::std_error(&col) / (2.0 * ms.sqrt()));
    }
    let fit = stats::linear_fit(&dts.iter().map(|d| d.ln()).collect::<Vec<_>>(), &rms.iter().map(|r| r.ln()).collect::<Vec<_>>());
    Ok(ItoConvergence { dts: dts.to_vec(), rms, rms_se, pairs, fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{build_mollifier, derive_kernels, MollifierShape};
    use crate::polymer::paths::PathSampler;
    use crate::stats;

    fn kernels(eps: f64) -> KernelSet {
        derive_kernels(&build_mollifier(MollifierShape::Bump, eps).unwrap()).unwrap()
    }

    #[test]
    fn trivial_stopping_cases() {
        let p = [0.0, 0.1, -0.2];
        assert_eq!(stopping_times(&p, &p, 0.1).tau_idx, 0);
        let a = [0.0, 0.0, 0.0];
        let b = [5.0, 5.1, 4.9];
        assert_eq!(stopping_times(&a, &b, 0.5), StoppingPair { sigma_idx: 2, tau_idx: 2 });
        let c = [1.0, 0.4, -0.1];
        assert_eq!(stopping_times(&c, &a, 0.5), StoppingPair { sigma_idx: 1, tau_idx: 2 });
    }

    #[test]
    fn hitting_probability_matches_reflection_principle() {
        let (t, dt, radius) = (0.25, 1e-4, 0.2);
        let s1 = PathSampler::new(0.0, t, dt, 1).unwrap();
        let s2 = PathSampler::new(2.0 * radius, t, dt, 2).unwrap();
        let n = s1.n_steps + 1;
        let (mut p1, mut p2) = (vec![0.0; n], vec![0.0; n]);
        let hits: Vec<f64> = (0..3000)
            .map(|k| {
                s1.positions(k, &mut p1);
                s2.positions(k, &mut p2);
                let st = stopping_times(&p1, &p2, radius);
                assert!(st.sigma_idx <= st.tau_idx);
                (st.sigma_idx < s1.n_steps) as u8 as f64
            })
            .collect();
        // variance-2 Brownian motion reaching distance `radius` before t
        let exact = libm::erfc(radius / (2.0 * t.sqrt()));
        let m = stats::mean(&hits);
        assert!((m - exact).abs() < 5.0 * stats::std_error(&hits), "{m} vs {exact}");
    }

    #[test]
    fn residual_vanishes_away_from_support() {
        let k = kernels(0.1);
        let a: Vec<f64> = (0..100).map(|i| (i as f64 * 0.3).sin() * 0.1).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 3.0).collect();
        assert!(ito_residual(&a, &b, 0.01, &k).abs() < 1e-12);
    }

    #[test]
    fn deterministic_paths_give_riemann_error() {
        let k = kernels(0.4);
        let errs: Vec<f64> = [0.01, 0.005]
            .iter()
            .map(|&dt| {
                let n = (1.0f64 / dt).round() as usize;
                let a: Vec<f64> = (0..=n).map(|i| -0.8 + i as f64 * dt).collect();
                let b = vec![0.0; n + 1];
                ito_residual_with_rate(&a, &b, dt, &k, 0.0).abs()
            })
            .collect();
        assert!(errs[0] < 0.05);
        let ratio = errs[0] / errs[1];
        assert!((1.6..2.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn brownian_residual_shrinks_like_sqrt_dt() {
        let k = kernels(0.4);
        let rms: Vec<f64> = [0.01, 0.0025]
            .iter()
            .map(|&dt| {
                let s1 = PathSampler::new(0.0, 1.0, dt, 3).unwrap();
                let s2 = PathSampler::new(0.0, 1.0, dt, 4).unwrap();
                let n = s1.n_steps + 1;
                let (mut p1, mut p2) = (vec![0.0; n], vec![0.0; n]);
                let sq: Vec<f64> = (0..400)
                    .map(|j| {
                        s1.positions(j, &mut p1);
                        s2.positions(j, &mut p2);
                        ito_residual(&p1, &p2, dt, &k).powi(2)
                    })
                    .collect();
                stats::mean(&sq).sqrt()
            })
            .collect();
        let order = (rms[0] / rms[1]).ln() / 4f64.ln();
        assert!(order > 0.35, "order {order}");
    }

    #[test]
    fn stopped_integral_is_antisymmetric_in_labels() {
        let k = kernels(0.2);
        let a = [0.0, 0.05, 0.12, 0.02];
        let b = [0.3, 0.2, 0.1, 0.15];
        let ab = stopped_integral(&a, &b, 0, 3, &k);
        let ba = stopped_integral(&b, &a, 0, 3, &k);
        assert!((ab + ba).abs() < 1e-14);
    }

    #[test]
    fn nested_convergence_order_is_about_one_half() {
        let k = kernels(0.4);
        let c = ito_convergence(0.0, 0.0, 1.0, &[0.01, 0.005, 0.0025], 400, &k, 9).unwrap();
        assert!(c.rms[0] > c.rms[1] && c.rms[1] > c.rms[2], "{c:?}");
        assert!((c.order() - 0.5).abs() < 0.15, "{c:?}");
        assert!(ito_convergence(0.0, 0.0, 1.0, &[0.01, 0.003], 10, &k, 9).is_err());
    }
}
