//! Gaussian inputs: space-time white noise, its spatial mollification and
//! random initial data.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::{Boundary, Field, Grid1D};
use crate::kernels::Mollifier;
use crate::rng::{self, LabRng, Purpose};

/// Largest number of values a materialized noise field may hold (1 GiB of f64).
pub const DEFAULT_MEMORY_BUDGET: usize = 1 << 27;

/// Space-time noise on a grid: `n_steps` slices of `n_cells` values.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseField {
    pub grid: Grid1D,
    pub dt: f64,
    pub n_steps: usize,
    pub seed: u64,
    values: Vec<f64>,
}

impl NoiseField {
    pub fn slice(&self, step: usize) -> &[f64] {
        let n = self.grid.n_cells();
        &self.values[step * n..(step + 1) * n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Reader that hands out the slices in order.
    pub fn reader(&self) -> FieldReader<'_> {
        FieldReader { field: self, step: 0 }
    }
}

/// Sequential supplier of noise slices, one per time step.
pub trait NoiseSource {
    /// Writes the next slice into `out` (length `n_cells`).
    fn fill(&mut self, out: &mut [f64]);
}

/// Noise that is identically zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct Silent;

impl NoiseSource for Silent {
    fn fill(&mut self, out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// Reads the slices of a materialized field.
#[derive(Debug)]
pub struct FieldReader<'a> {
    field: &'a NoiseField,
    step: usize,
}

impl NoiseSource for FieldReader<'_> {
    fn fill(&mut self, out: &mut [f64]) {
        out.copy_from_slice(self.field.slice(self.step));
        self.step += 1;
    }
}

/// Streamed space-time white noise: i.i.d. `N(0, 1/(dt dx))` per cell and step.
#[derive(Debug, Clone)]
pub struct WhiteNoiseStream {
    rng: LabRng,
    sd: f64,
}

impl WhiteNoiseStream {
    pub fn new(grid: &Grid1D, dt: f64, seed: u64, replica: u64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(LabError::invalid("dt", "must be positive"));
        }
        Ok(Self { rng: rng::stream(seed, replica, Purpose::SpaceTimeNoise), sd: (1.0 / (dt * grid.dx())).sqrt() })
    }
}

impl NoiseSource for WhiteNoiseStream {
    fn fill(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            let z: f64 = self.rng.sample(StandardNormal);
            *v = self.sd * z;
        }
    }
}

pub fn sample_spacetime_noise(grid: &Grid1D, dt: f64, n_steps: usize, seed: u64) -> Result<NoiseField> {
    sample_spacetime_noise_with_budget(grid, dt, n_steps, seed, DEFAULT_MEMORY_BUDGET)
}

/// As [`sample_spacetime_noise`]; fails when the field would exceed `budget`
/// values (use [`WhiteNoiseStream`] to stream instead).
pub fn sample_spacetime_noise_with_budget(
    grid: &Grid1D,
    dt: f64,
    n_steps: usize,
    seed: u64,
    budget: usize,
) -> Result<NoiseField> {
    let requested = n_steps.saturating_mul(grid.n_cells());
    if requested > budget {
        return Err(LabError::MemoryBudget { requested, budget });
    }
    let mut stream = WhiteNoiseStream::new(grid, dt, seed, 0)?;
    let mut values = vec![0.0; requested];
    for chunk in values.chunks_exact_mut(grid.n_cells()) {
        stream.fill(chunk);
    }
    Ok(NoiseField { grid: *grid, dt, n_steps, seed, values })
}

/// A mollifier sampled on the lattice: `w_m = phi(m dx) dx` for `|m| <= half_len`.
#[derive(Debug, Clone)]
pub struct Stencil {
    dx: f64,
    half_len: usize,
    weights: Vec<f64>,
    slopes: Vec<f64>,
}

impl Stencil {
    pub fn new(phi: &Mollifier, dx: f64) -> Result<Self> {
        if phi.epsilon() < dx {
            return Err(LabError::invalid(
                "epsilon",
                format!("mollifier half-width {} is narrower than one cell ({dx})", phi.epsilon()),
            ));
        }
        let half_len = (phi.epsilon() / dx).floor() as usize;
        let offsets = -(half_len as i64)..=half_len as i64;
        let weights = offsets.clone().map(|m| phi.value(m as f64 * dx) * dx).collect();
        let slopes = offsets.map(|m| phi.derivative(m as f64 * dx) * dx).collect();
        Ok(Self { dx, half_len, weights, slopes })
    }

    pub fn half_len(&self) -> usize {
        self.half_len
    }

    fn get(v: &[f64], half_len: usize, m: i64) -> f64 {
        let idx = m + half_len as i64;
        if idx < 0 || idx as usize >= v.len() {
            0.0
        } else {
            v[idx as usize]
        }
    }

    /// Lattice covariance of mollified noise at lag `k` cells, in units of `R`.
    pub fn covariance(&self, k: i64) -> f64 {
        let h = self.half_len as i64;
        (-h..=h).map(|m| Self::get(&self.weights, self.half_len, m) * Self::get(&self.weights, self.half_len, m + k)).sum::<f64>()
            / self.dx
    }

    /// Lattice analogue of `R'` at lag `k`: covariance of the field at cell `i`
    /// with its derivative at cell `i + k`.
    /// Exactly odd in `k`.
    pub fn cross_covariance(&self, k: i64) -> f64 {
        if k == 0 {
            return 0.0;
        }
        if k < 0 {
            return -self.cross_covariance(-k);
        }
        let h = self.half_len as i64;
        (-h..=h).map(|m| Self::get(&self.weights, self.half_len, m) * Self::get(&self.slopes, self.half_len, m + k)).sum::<f64>()
            / self.dx
    }

    /// `out_i = sum_m w_m input_{i-m}`, wrapped or zero-padded per `boundary`.
    pub fn apply(&self, input: &[f64], boundary: Boundary, out: &mut [f64]) {
        convolve(&self.weights, self.half_len, input, boundary, out);
    }

    /// Same with the derivative weights, giving the spatial derivative of the smoothed field.
    pub fn apply_derivative(&self, input: &[f64], boundary: Boundary, out: &mut [f64]) {
        convolve(&self.slopes, self.half_len, input, boundary, out);
    }
}

fn convolve(weights: &[f64], half_len: usize, input: &[f64], boundary: Boundary, out: &mut [f64]) {
    let n = input.len() as i64;
    let h = half_len as i64;
    for (i, o) in out.iter_mut().enumerate() {
        let i = i as i64;
        let mut s = 0.0;
        for (k, w) in weights.iter().enumerate() {
            let j = i - (k as i64 - h);
            let v = match boundary {
                Boundary::Periodic => input[j.rem_euclid(n) as usize],
                Boundary::Truncated if (0..n).contains(&j) => input[j as usize],
                Boundary::Truncated => 0.0,
            };
            s += w * v;
        }
        *o = s;
    }
}

pub fn mollify_noise(xi: &NoiseField, phi: &Mollifier) -> Result<NoiseField> {
    let stencil = Stencil::new(phi, xi.grid.dx())?;
    let n = xi.grid.n_cells();
    let mut values = vec![0.0; xi.values.len()];
    for (src, dst) in xi.values.chunks_exact(n).zip(values.chunks_exact_mut(n)) {
        stencil.apply(src, xi.grid.boundary(), dst);
    }
    Ok(NoiseField { values, ..xi.clone() })
}

/// Streamed mollified noise; optionally also yields the spatial derivative.
#[derive(Debug, Clone)]
pub struct MollifiedStream {
    white: WhiteNoiseStream,
    stencil: Stencil,
    boundary: Boundary,
    scratch: Vec<f64>,
}

impl MollifiedStream {
    pub fn new(grid: &Grid1D, dt: f64, phi: &Mollifier, seed: u64, replica: u64) -> Result<Self> {
        Ok(Self {
            white: WhiteNoiseStream::new(grid, dt, seed, replica)?,
            stencil: Stencil::new(phi, grid.dx())?,
            boundary: grid.boundary(),
            scratch: vec![0.0; grid.n_cells()],
        })
    }

    /// Next slice of the smoothed field and of its derivative.
    pub fn fill_with_derivative(&mut self, out: &mut [f64], derivative: &mut [f64]) {
        self.white.fill(&mut self.scratch);
        self.stencil.apply(&self.scratch, self.boundary, out);
        self.stencil.apply_derivative(&self.scratch, self.boundary, derivative);
    }
}

impl NoiseSource for MollifiedStream {
    fn fill(&mut self, out: &mut [f64]) {
        self.white.fill(&mut self.scratch);
        self.stencil.apply(&self.scratch, self.boundary, out);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitialKind {
    /// Lattice white noise, variance `1/dx` per cell.
    White,
    /// White noise convolved with the given mollifier.
    Smoothed(Mollifier),
    Zero,
    Constant(f64),
}

/// Initial slope field and its height function `h0(x_min) = 0`.
#[derive(Debug, Clone)]
pub struct InitialField {
    pub u0: Field,
    pub h0: Field,
}

pub fn sample_initial_field(kind: InitialKind, grid: &Grid1D, seed: u64) -> Result<InitialField> {
    sample_initial_replica(kind, grid, seed, 0)
}

/// Replica `replica` of the initial-data ensemble for `seed`.
pub fn sample_initial_replica(kind: InitialKind, grid: &Grid1D, seed: u64, replica: u64) -> Result<InitialField> {
    let n = grid.n_cells();
    let u0 = match kind {
        InitialKind::Zero => vec![0.0; n],
        InitialKind::Constant(m) => vec![m; n],
        InitialKind::White | InitialKind::Smoothed(_) => {
            let mut r = rng::stream(seed, replica, Purpose::InitialField);
            let sd = (1.0 / grid.dx()).sqrt();
            let white: Vec<f64> = (0..n).map(|_| sd * r.sample::<f64, _>(StandardNormal)).collect();
            match kind {
                InitialKind::Smoothed(psi) => {
                    let stencil = Stencil::new(&psi, grid.dx())?;
                    let mut out = vec![0.0; n];
                    stencil.apply(&white, grid.boundary(), &mut out);
                    out
                }
                _ => white,
            }
        }
    };
    let h0 = heights_from_slopes(&u0, grid.dx());
    Ok(InitialField { u0: Field::from_values(*grid, u0)?, h0: Field::from_values(*grid, h0)? })
}

/// `h_0 = 0`, `h_i = sum_{k<i} u_k dx`.
pub fn heights_from_slopes(u: &[f64], dx: f64) -> Vec<f64> {
    let mut acc = 0.0;
    u.iter()
        .map(|v| {
            let h = acc;
            acc += v * dx;
            h
        })
        .collect()
}

/// Smooth initial data `u0 = psi * zeta` evaluated off the lattice, together with
/// `h0(x) = int_0^x u0`, from a lattice white noise `zeta`.
#[derive(Debug, Clone)]
pub struct SmoothInitialProfile {
    grid: Grid1D,
    psi: Mollifier,
    zeta: Vec<f64>,
    /// `prefix[j] = sum_{k<j} zeta_k dx`.
    prefix: Vec<f64>,
    anchor: f64,
}

impl SmoothInitialProfile {
    pub fn sample(grid: &Grid1D, psi: &Mollifier, seed: u64, replica: u64) -> Self {
        let mut r = rng::stream(seed, replica, Purpose::InitialField);
        let sd = (1.0 / grid.dx()).sqrt();
        let zeta = (0..grid.n_cells()).map(|_| sd * r.sample::<f64, _>(StandardNormal)).collect();
        Self::from_white(grid, psi, zeta)
    }

    pub fn from_white(grid: &Grid1D, psi: &Mollifier, zeta: Vec<f64>) -> Self {
        let dx = grid.dx();
        let mut prefix = Vec::with_capacity(zeta.len() + 1);
        let mut acc = 0.0;
        prefix.push(0.0);
        for z in &zeta {
            acc += z * dx;
            prefix.push(acc);
        }
        let mut p = Self { grid: *grid, psi: *psi, zeta, prefix, anchor: 0.0 };
        p.anchor = p.primitive_from_left(0.0);
        p
    }

    fn window(&self, x: f64) -> (usize, usize) {
        let e = self.psi.epsilon();
        let dx = self.grid.dx();
        let n = self.zeta.len() as f64;
        let lo = ((x - e - self.grid.x_min()) / dx - 0.5).ceil().clamp(0.0, n) as usize;
        let hi = ((x + e - self.grid.x_min()) / dx - 0.5).floor().clamp(-1.0, n - 1.0);
        (lo, (hi + 1.0) as usize)
    }

    /// `u0(x) = sum_j psi(x - y_j) zeta_j dx`.
    pub fn slope(&self, x: f64) -> f64 {
        let (lo, hi) = self.window(x);
        let dx = self.grid.dx();
        (lo..hi).map(|j| self.psi.value(x - self.grid.center(j)) * self.zeta[j]).sum::<f64>() * dx
    }

    /// `sum_j Psi(x - y_j) zeta_j dx` with `Psi` the distribution function of `psi`.
    fn primitive_from_left(&self, x: f64) -> f64 {
        let (lo, hi) = self.window(x);
        let dx = self.grid.dx();
        let inner: f64 = (lo..hi.max(lo)).map(|j| self.psi.cdf(x - self.grid.center(j)) * self.zeta[j]).sum::<f64>() * dx;
        self.prefix[lo] + inner
    }

    /// `h0(x) = int_0^x u0`.
    pub fn height(&self, x: f64) -> f64 {
        self.primitive_from_left(x) - self.anchor
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{build_mollifier, MollifierShape};

    fn grid(dx: f64, hw: f64) -> Grid1D {
        Grid1D::centered(hw, dx, Boundary::Periodic).unwrap()
    }

    #[test]
    fn noise_is_reproducible_per_seed() {
        let g = grid(0.1, 1.0);
        let a = sample_spacetime_noise(&g, 0.01, 5, 1).unwrap();
        let b = sample_spacetime_noise(&g, 0.01, 5, 1).unwrap();
        let c = sample_spacetime_noise(&g, 0.01, 5, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn per_cell_variance_matches_lattice_scaling() {
        let g = grid(0.1, 1.0);
        let xi = sample_spacetime_noise(&g, 0.001, 5000, 7).unwrap();
        let vals = xi.values();
        let n = vals.len() as f64;
        let var = vals.iter().map(|v| v * v).sum::<f64>() / n;
        let target = 1.0 / (0.001 * 0.1);
        // SE of a Gaussian variance estimate is sqrt(2/n) * sigma^2.
        assert!((var - target).abs() < 5.0 * (2.0 / n).sqrt() * target);
    }

    #[test]
    fn memory_budget_is_enforced() {
        let g = grid(0.1, 1.0);
        assert!(matches!(
            sample_spacetime_noise_with_budget(&g, 0.01, 100, 1, 100),
            Err(LabError::MemoryBudget { .. })
        ));
    }

    #[test]
    fn stencil_rejects_sub_cell_support() {
        let phi = build_mollifier(MollifierShape::Bump, 0.05).unwrap();
        assert!(Stencil::new(&phi, 0.1).is_err());
    }

    #[test]
    fn lattice_covariances_approximate_kernels() {
        let phi = build_mollifier(MollifierShape::Bump, 0.2).unwrap();
        let k = crate::kernels::derive_kernels(&phi).unwrap();
        let s = Stencil::new(&phi, 0.01).unwrap();
        for lag in [0i64, 3, 10, 25] {
            let x = lag as f64 * 0.01;
            assert!((s.covariance(lag) - k.covariance(x)).abs() < 1e-4 * k.at_zero());
            let rd = k.covariance_derivative(x);
            assert!((s.cross_covariance(lag) - rd).abs() < 5e-4 * rd.abs().max(1.0));
            assert_eq!(s.cross_covariance(-lag), -s.cross_covariance(lag));
        }
        assert_eq!(s.cross_covariance(0), 0.0);
        assert_eq!(s.covariance(41), 0.0);
    }

    #[test]
    fn constant_and_zero_initial_fields() {
        let g = grid(0.05, 1.0);
        let z = sample_initial_field(InitialKind::Zero, &g, 1).unwrap();
        assert!(z.h0.values.iter().all(|&h| h == 0.0));
        let c = sample_initial_field(InitialKind::Constant(2.0), &g, 1).unwrap();
        assert_eq!(c.h0.values[0], 0.0);
        assert!((c.h0.values[10] - 2.0 * 10.0 * 0.05).abs() < 1e-12);
    }

    #[test]
    fn smooth_profile_height_is_primitive_of_slope() {
        let g = grid(0.02, 2.0);
        let psi = build_mollifier(MollifierShape::Bump, 0.1).unwrap();
        let p = SmoothInitialProfile::sample(&g, &psi, 3, 0);
        assert!(p.height(0.0).abs() < 1e-12);
        for x in [-0.7, 0.013, 0.4] {
            let h = 1e-5;
            let fd = (p.height(x + h) - p.height(x - h)) / (2.0 * h);
            assert!((fd - p.slope(x)).abs() < 1e-4 * (1.0 + p.slope(x).abs()), "x={x}");
        }
        let direct = crate::quadrature::integrate(|y| p.slope(y), 0.0, 0.37, 200, 8);
        assert!((direct - p.height(0.37)).abs() < 1e-8);
    }
}
