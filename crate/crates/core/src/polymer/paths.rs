use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{LabError, Result};
use crate::rng::{self, Purpose};
use crate::spde::steps_for;

/// Largest `M * n_steps` held in memory by [`sample_paths`].
pub const PATH_MEMORY_BUDGET: usize = 1 << 26;

/// Deterministic generator of Brownian paths: path `k` is drawn from its own
/// random stream, so any path can be regenerated on its own.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSampler {
    pub origin: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub seed: u64,
}

impl PathSampler {
    pub fn new(origin: f64, t: f64, dt: f64, seed: u64) -> Result<Self> {
        if !(dt > 0.0 && t > 0.0) {
            return Err(LabError::invalid("dt", "time step and horizon must be positive"));
        }
        Ok(Self { origin, dt, n_steps: steps_for(t, dt)?, seed })
    }

    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    /// Writes the `N(0, dt)` increments of path `k`.
    pub fn increments(&self, k: usize, out: &mut [f64]) {
        let mut r = rng::stream(self.seed, k as u64, Purpose::Paths);
        let sd = self.dt.sqrt();
        for v in out.iter_mut() {
            *v = sd * r.sample::<f64, _>(StandardNormal);
        }
    }

    /// Writes the `n_steps + 1` positions of path `k`, starting at the origin.
    pub fn positions(&self, k: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.n_steps + 1);
        let mut r = rng::stream(self.seed, k as u64, Purpose::Paths);
        let sd = self.dt.sqrt();
        let mut x = self.origin;
        out[0] = x;
        for o in out.iter_mut().skip(1) {
            x += sd * r.sample::<f64, _>(StandardNormal);
            *o = x;
        }
    }
}

/// `M` stored Brownian paths from a common origin.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub origin: f64,
    pub horizon: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub seed: u64,
    increments: Vec<f64>,
}

pub fn sample_paths(x: f64, t: f64, dt: f64, m: usize, seed: u64) -> Result<PathEnsemble> {
    if m < 2 {
        return Err(LabError::invalid("paths", "need at least 2 paths"));
    }
    let sampler = PathSampler::new(x, t, dt, seed)?;
    let requested = m.saturating_mul(sampler.n_steps);
    if requested > PATH_MEMORY_BUDGET {
        return Err(LabError::MemoryBudget { requested, budget: PATH_MEMORY_BUDGET });
    }
    let n = sampler.n_steps;
    let mut increments = vec![0.0; m * n];
    for (k, chunk) in increments.chunks_exact_mut(n).enumerate() {
        sampler.increments(k, chunk);
    }
    Ok(PathEnsemble { origin: x, horizon: t, dt, n_steps: n, seed, increments })
}

impl PathEnsemble {
    pub fn len(&self) -> usize {
        self.increments.len() / self.n_steps
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    pub fn increments(&self, k: usize) -> &[f64] {
        &self.increments[k * self.n_steps..(k + 1) * self.n_steps]
    }

    pub fn positions(&self, k: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_steps + 1);
        let mut x = self.origin;
        out.push(x);
        for d in self.increments(k) {
            x += d;
            out.push(x);
        }
        out
    }

    pub fn endpoint(&self, k: usize) -> f64 {
        self.origin + self.increments(k).iter().sum::<f64>()
    }

    /// Same Brownian paths observed on a grid `factor` times coarser.
    pub fn coarsen(&self, factor: usize) -> Result<PathEnsemble> {
        if factor == 0 || !self.n_steps.is_multiple_of(factor) {
            return Err(LabError::invalid("factor", format!("{factor} does not divide {} steps", self.n_steps)));
        }
        let n = self.n_steps / factor;
        let increments = self.increments.chunks_exact(factor).map(|c| c.iter().sum()).collect();
        Ok(PathEnsemble { dt: self.dt * factor as f64, n_steps: n, increments, ..self.clone() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;

    #[test]
    fn brownian_moments() {
        let e = sample_paths(0.3, 1.0, 0.01, 4000, 11).unwrap();
        let ends: Vec<f64> = (0..e.len()).map(|k| e.endpoint(k)).collect();
        let m = stats::mean(&ends);
        assert!((m - 0.3).abs() < 5.0 * stats::std_error(&ends));
        let v = stats::variance(&ends);
        assert!((v - 1.0).abs() < 5.0 * stats::variance_std_error(&ends));
        let qv: Vec<f64> = (0..e.len()).map(|k| e.increments(k).iter().map(|d| d * d).sum()).collect();
        assert!((stats::mean(&qv) - 1.0).abs() < 5.0 * stats::std_error(&qv));
    }

    #[test]
    fn sampler_and_ensemble_agree_and_coarsening_preserves_endpoints() {
        let e = sample_paths(0.0, 0.5, 0.01, 3, 5).unwrap();
        let s = PathSampler::new(0.0, 0.5, 0.01, 5).unwrap();
        let mut pos = vec![0.0; 51];
        s.positions(2, &mut pos);
        let direct = e.positions(2);
        for (a, b) in pos.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12);
        }
        let c = e.coarsen(5).unwrap();
        assert_eq!(c.n_steps, 10);
        assert!((c.endpoint(1) - e.endpoint(1)).abs() < 1e-12);
        assert!(e.coarsen(7).is_err());
    }

    #[test]
    fn one_step_endpoint_is_gaussian() {
        let e = sample_paths(0.0, 0.5, 0.5, 3000, 2).unwrap();
        let z: Vec<f64> = (0..e.len()).map(|k| e.endpoint(k) / 0.5f64.sqrt()).collect();
        assert!(stats::ks_one_sample(&z, stats::normal_cdf).passes(0.01));
    }
}
