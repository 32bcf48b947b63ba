//! Explicit time stepping of the stochastic heat equation and of the smoothed
//! stochastic Burgers equation, the Cole-Hopf map, and linear observables.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::{Boundary, Field, Grid1D};
use crate::kernels::KernelSet;
use crate::noise::NoiseSource;

/// Default ratio `dt / dx^2`.
pub const DEFAULT_STABILITY_FACTOR: f64 = 0.25;

/// Magnitude at which the Burgers solver declares blow-up.
pub const BLOW_UP_THRESHOLD: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    EulerMaruyama,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub stability_factor: f64,
}

impl SolverConfig {
    /// Largest step `<= 0.25 dx^2` that divides `t_end` evenly.
    pub fn for_grid(grid: &Grid1D, t_end: f64) -> Self {
        let dx = grid.dx();
        let n = (t_end / (DEFAULT_STABILITY_FACTOR * dx * dx)).ceil().max(1.0);
        Self { dt: t_end / n, t_end, scheme: Scheme::EulerMaruyama, stability_factor: DEFAULT_STABILITY_FACTOR }
    }

    /// Checks the stability bound and returns the number of steps.
    pub fn validate(&self, grid: &Grid1D) -> Result<usize> {
        if !(self.dt > 0.0) || !(self.t_end >= 0.0) {
            return Err(LabError::invalid("dt", "time step and horizon must be positive"));
        }
        if !(self.stability_factor > 0.0 && self.stability_factor <= 1.0) {
            return Err(LabError::invalid("stability_factor", "must lie in (0, 1]"));
        }
        let dx = grid.dx();
        if self.dt > self.stability_factor * dx * dx * (1.0 + 1e-12) {
            return Err(LabError::invalid(
                "dt",
                format!("dt = {} exceeds stability bound {} dx^2 = {}", self.dt, self.stability_factor, self.stability_factor * dx * dx),
            ));
        }
        steps_for(self.t_end, self.dt)
    }
}

/// Number of steps of size `dt` covering `t`; `t / dt` must be integral.
pub fn steps_for(t: f64, dt: f64) -> Result<usize> {
    let ratio = t / dt;
    let n = ratio.round();
    if (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
        return Err(LabError::invalid("dt", format!("horizon {t} is not a whole number of steps {dt}")));
    }
    Ok(n as usize)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub terminal: Field,
    pub trajectory: Vec<Snapshot>,
}

fn laplacian_at(v: &[f64], i: usize, boundary: Boundary) -> f64 {
    let n = v.len();
    let (l, r) = match boundary {
        Boundary::Periodic => (v[(i + n - 1) % n], v[(i + 1) % n]),
        Boundary::Truncated => (v[i.saturating_sub(1)], v[(i + 1).min(n - 1)]),
    };
    l - 2.0 * v[i] + r
}

/// Euler-Maruyama for `dZ = (1/2) Z'' dt + Z xi dt` with Ito product noise.
///
/// `record_every = Some(k)` stores the field every `k` steps (and at the end).
pub fn solve_she(
    z0: &Field,
    noise: &mut dyn NoiseSource,
    cfg: &SolverConfig,
    record_every: Option<usize>,
) -> Result<Solution> {
    let grid = z0.grid;
    let n_steps = cfg.validate(&grid)?;
    if let Some((cell, &value)) = z0.values.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
        return Err(LabError::Positivity { step: 0, cell, value });
    }
    let dx = grid.dx();
    let diff = 0.5 * cfg.dt / (dx * dx);
    let n = grid.n_cells();
    let mut z = z0.values.clone();
    let mut next = vec![0.0; n];
    let mut xi = vec![0.0; n];
    let mut trajectory = Vec::new();
    if record_every.is_some() {
        trajectory.push(Snapshot { t: 0.0, values: z.clone() });
    }
    for step in 0..n_steps {
        noise.fill(&mut xi);
        for i in 0..n {
            let v = z[i] + diff * laplacian_at(&z, i, grid.boundary()) + z[i] * xi[i] * cfg.dt;
            if !(v > 0.0 && v.is_finite()) {
                // A delta start has exact zeros away from the support before diffusion reaches them.
                if v == 0.0 && z[i] == 0.0 {
                    next[i] = 0.0;
                    continue;
                }
                return Err(LabError::Positivity { step: step + 1, cell: i, value: v });
            }
            next[i] = v;
        }
        std::mem::swap(&mut z, &mut next);
        if let Some(k) = record_every {
            if (step + 1) % k.max(1) == 0 || step + 1 == n_steps {
                trajectory.push(Snapshot { t: (step + 1) as f64 * cfg.dt, values: z.clone() });
            }
        }
    }
    Ok(Solution { terminal: Field { grid, values: z }, trajectory })
}

/// `h = log Z` and `u = dh/dx` by centred differences.
pub fn cole_hopf(z: &Field) -> Result<(Field, Field)> {
    if let Some((cell, &value)) = z.values.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(LabError::Positivity { step: 0, cell, value });
    }
    let h: Vec<f64> = z.values.iter().map(|v| v.ln()).collect();
    let u = centered_derivative(&h, z.grid.dx(), z.grid.boundary());
    Ok((Field { grid: z.grid, values: h }, Field { grid: z.grid, values: u }))
}

/// Centred differences; one-sided at the ends of a truncated grid.
pub fn centered_derivative(v: &[f64], dx: f64, boundary: Boundary) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|i| match boundary {
            Boundary::Periodic => (v[(i + 1) % n] - v[(i + n - 1) % n]) / (2.0 * dx),
            Boundary::Truncated if i == 0 => (v[1] - v[0]) / dx,
            Boundary::Truncated if i == n - 1 => (v[n - 1] - v[n - 2]) / dx,
            Boundary::Truncated => (v[i + 1] - v[i - 1]) / (2.0 * dx),
        })
        .collect()
}

/// Euler-Maruyama for `du = [(1/2)(u^2 * R)' + (1/2)u''] dt + d(eta)'`,
/// with every `'` the centered difference (so `u''` uses the 2dx stencil).
///
/// `eta` must supply slices of the mollified noise built from the same
/// mollifier as `kernels` (variance `R(0)/dt` per cell).
pub fn solve_smoothed_burgers(
    u0: &Field,
    kernels: &KernelSet,
    eta: &mut dyn NoiseSource,
    cfg: &SolverConfig,
) -> Result<Field> {
    let grid = u0.grid;
    let n_steps = cfg.validate(&grid)?;
    let dx = grid.dx();
    let n = grid.n_cells();
    let half = (kernels.support_radius() / dx).floor() as i64;
    let weights: Vec<f64> = (-half..=half).map(|k| kernels.covariance(k as f64 * dx) * dx).collect();
    let boundary = grid.boundary();
    let fetch = |v: &[f64], j: i64| -> f64 {
        match boundary {
            Boundary::Periodic => v[j.rem_euclid(n as i64) as usize],
            Boundary::Truncated if (0..n as i64).contains(&j) => v[j as usize],
            Boundary::Truncated => 0.0,
        }
    };
    let mut u = u0.values.clone();
    let mut sq = vec![0.0; n];
    let mut smooth_sq = vec![0.0; n];
    let mut eta_slice = vec![0.0; n];
    let mut flux = vec![0.0; n];
    let mut next = vec![0.0; n];
    for step in 0..n_steps {
        eta.fill(&mut eta_slice);
        for (s, v) in sq.iter_mut().zip(&u) {
            *s = v * v;
        }
        for (i, out) in smooth_sq.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, w) in weights.iter().enumerate() {
                acc += w * fetch(&sq, i as i64 - (k as i64 - half));
            }
            *out = acc;
        }
        // The whole right-hand side is one centered derivative of
        // (1/2)(u^2 * R) + (1/2)u' + eta; applying the same difference to the
        // gradient and to the forcing keeps the lattice covariance of eta
        // stationary under the linear part.
        let grad = centered_derivative(&u, dx, boundary);
        for i in 0..n {
            flux[i] = 0.5 * smooth_sq[i] + 0.5 * grad[i] + eta_slice[i];
        }
        let rhs = centered_derivative(&flux, dx, boundary);
        for i in 0..n {
            let v = u[i] + cfg.dt * rhs[i];
            if !(v.abs() <= BLOW_UP_THRESHOLD) {
                return Err(LabError::BlowUp { step: step + 1, cell: i, value: v.abs() });
            }
            next[i] = v;
        }
        std::mem::swap(&mut u, &mut next);
    }
    Ok(Field { grid, values: u })
}

/// Smooth compactly supported test functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    /// `amplitude * exp(-1 / (1 - z^2))`, `z = (x - center) / half_width`.
    Bump { center: f64, half_width: f64, amplitude: f64 },
    /// `amplitude * z * exp(-1 / (1 - z^2))`.
    OddBump { center: f64, half_width: f64, amplitude: f64 },
}

/// `int_{-1}^{1} exp(-1/(1-z^2)) dz`.
const BUMP_MASS: f64 = 0.443_993_816_168_079_4;

impl TestFunction {
    /// Bump with prescribed integral.
    pub fn bump_with_integral(center: f64, half_width: f64, integral: f64) -> Self {
        TestFunction::Bump { center, half_width, amplitude: integral / (half_width * BUMP_MASS) }
    }

    fn parts(&self) -> (f64, f64, f64, bool) {
        match *self {
            TestFunction::Bump { center, half_width, amplitude } => (center, half_width, amplitude, false),
            TestFunction::OddBump { center, half_width, amplitude } => (center, half_width, amplitude, true),
        }
    }

    /// Closed support `[lo, hi]`.
    pub fn support(&self) -> (f64, f64) {
        let (c, w, _, _) = self.parts();
        (c - w, c + w)
    }

    pub fn value(&self, x: f64) -> f64 {
        let (c, w, a, odd) = self.parts();
        let z = (x - c) / w;
        if z.abs() >= 1.0 {
            return 0.0;
        }
        let b = (-1.0 / (1.0 - z * z)).exp();
        if odd {
            a * z * b
        } else {
            a * b
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let (c, w, a, odd) = self.parts();
        let z = (x - c) / w;
        if z.abs() >= 1.0 {
            return 0.0;
        }
        let q = 1.0 - z * z;
        let b = (-1.0 / q).exp();
        let db = -2.0 * z / (q * q) * b;
        if odd {
            a * (b + z * db) / w
        } else {
            a * db / w
        }
    }
}

/// A test function sampled on the cells of a grid.
#[derive(Debug, Clone)]
pub struct Observable {
    pub function: TestFunction,
    pub grid: Grid1D,
    values: Vec<f64>,
    slopes: Vec<f64>,
    norm_sq: f64,
}

impl Observable {
    pub fn new(function: TestFunction, grid: &Grid1D) -> Result<Self> {
        let (lo, hi) = function.support();
        if !(lo > grid.x_min() && hi < grid.x_max()) {
            return Err(LabError::invalid(
                "test_function",
                format!("support [{lo}, {hi}] must lie strictly inside [{}, {}]", grid.x_min(), grid.x_max()),
            ));
        }
        let values: Vec<f64> = grid.centers().map(|x| function.value(x)).collect();
        let slopes = grid.centers().map(|x| function.derivative(x)).collect();
        let norm_sq = values.iter().map(|v| v * v).sum::<f64>() * grid.dx();
        if !(norm_sq > 0.0) {
            return Err(LabError::invalid("test_function", "vanishes on the grid"));
        }
        Ok(Self { function, grid: *grid, values, slopes, norm_sq })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    /// `sum f(x_i)^2 dx`.
    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    /// `sum f(x_i) g(x_i) dx`.
    pub fn inner(&self, other: &Observable) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>() * self.grid.dx()
    }

    /// Indices of cells where `f` or `f'` is non-zero.
    pub fn active_cells(&self) -> Vec<usize> {
        (0..self.values.len()).filter(|&i| self.values[i] != 0.0 || self.slopes[i] != 0.0).collect()
    }
}

/// `<f, u> = sum f(x_i) u(x_i) dx`.
pub fn observe(u: &Field, obs: &Observable) -> f64 {
    obs.values.iter().zip(&u.values).map(|(f, v)| f * v).sum::<f64>() * u.grid.dx()
}

/// Summation-by-parts form `-sum f'(x_i) h(x_i) dx`.
pub fn observe_heights(h: &Field, obs: &Observable) -> f64 {
    -obs.slopes.iter().zip(&h.values).map(|(f, v)| f * v).sum::<f64>() * h.grid.dx()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::Silent;

    fn heat_kernel(t: f64, x: f64) -> f64 {
        (-x * x / (2.0 * t)).exp() / (2.0 * std::f64::consts::PI * t).sqrt()
    }

    #[test]
    fn noise_off_delta_start_follows_heat_kernel() {
        let grid = Grid1D::centered(4.0, 0.05, Boundary::Periodic).unwrap();
        let z0 = Field::delta(grid, 0.025);
        let cfg = SolverConfig::for_grid(&grid, 0.5);
        let sol = solve_she(&z0, &mut Silent, &cfg, None).unwrap();
        let y = grid.center(grid.nearest(0.025));
        let err = grid
            .centers()
            .zip(&sol.terminal.values)
            .map(|(x, z)| (z - heat_kernel(0.5, x - y)).abs())
            .fold(0.0, f64::max);
        assert!(err < 2.0 * 0.05 * 0.05, "L-inf error {err}");
        assert!((sol.terminal.sum_dx() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constants_are_steady() {
        let grid = Grid1D::centered(1.0, 0.1, Boundary::Truncated).unwrap();
        let cfg = SolverConfig::for_grid(&grid, 0.1);
        let sol = solve_she(&Field::constant(grid, 1.0), &mut Silent, &cfg, Some(10)).unwrap();
        assert!(sol.terminal.values.iter().all(|&z| (z - 1.0).abs() < 1e-15));
        assert!(sol.trajectory.len() >= 2);
    }

    #[test]
    fn unstable_step_is_rejected() {
        let grid = Grid1D::centered(1.0, 0.1, Boundary::Periodic).unwrap();
        let cfg = SolverConfig { dt: 0.01, t_end: 0.1, scheme: Scheme::EulerMaruyama, stability_factor: 0.25 };
        assert!(cfg.validate(&grid).is_err());
    }

    #[test]
    fn cole_hopf_of_simple_fields() {
        let grid = Grid1D::centered(1.0, 0.01, Boundary::Truncated).unwrap();
        let (h, u) = cole_hopf(&Field::constant(grid, 3.0)).unwrap();
        assert!(h.values.iter().all(|&v| (v - 3f64.ln()).abs() < 1e-15));
        assert!(u.values.iter().all(|&v| v.abs() < 1e-12));
        let (_, u) = cole_hopf(&Field::from_fn(grid, f64::exp)).unwrap();
        assert!(u.values.iter().all(|&v| (v - 1.0).abs() < 1e-9));
        let t = 0.3;
        let (_, u) = cole_hopf(&Field::from_fn(grid, |x| heat_kernel(t, x))).unwrap();
        for (i, x) in grid.centers().enumerate().skip(1).take(grid.n_cells() - 2) {
            assert!((u.values[i] + x / t).abs() < 1e-10);
        }
        assert!(cole_hopf(&Field::constant(grid, 0.0)).is_err());
    }

    #[test]
    fn burgers_keeps_constants_without_noise() {
        let phi = crate::kernels::build_mollifier(crate::kernels::MollifierShape::Bump, 0.2).unwrap();
        let k = crate::kernels::derive_kernels(&phi).unwrap();
        let grid = Grid1D::centered(2.0, 0.05, Boundary::Periodic).unwrap();
        let cfg = SolverConfig::for_grid(&grid, 0.1);
        let u = solve_smoothed_burgers(&Field::constant(grid, 0.7), &k, &mut Silent, &cfg).unwrap();
        assert!(u.values.iter().all(|&v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn observables() {
        let grid = Grid1D::centered(2.0, 0.01, Boundary::Periodic).unwrap();
        let f = Observable::new(TestFunction::bump_with_integral(0.1, 0.5, 2.0), &grid).unwrap();
        assert!((observe(&Field::constant(grid, 1.0), &f) - 2.0).abs() < 1e-7);
        assert_eq!(observe(&Field::zeros(grid), &f), 0.0);
        // Summation by parts against a smooth height function.
        let h = Field::from_fn(grid, |x| x.sin());
        let u = Field::from_fn(grid, |x| x.cos());
        assert!((observe(&u, &f) - observe_heights(&h, &f)).abs() < 1e-6);
        let outside = TestFunction::Bump { center: 1.8, half_width: 0.5, amplitude: 1.0 };
        assert!(Observable::new(outside, &grid).is_err());
    }

    #[test]
    fn test_function_derivatives() {
        for tf in [
            TestFunction::Bump { center: 0.2, half_width: 0.6, amplitude: 1.3 },
            TestFunction::OddBump { center: -0.1, half_width: 0.4, amplitude: 2.0 },
        ] {
            for x in [-0.3, 0.0, 0.15, 0.5] {
                let h = 1e-6;
                let fd = (tf.value(x + h) - tf.value(x - h)) / (2.0 * h);
                assert!((fd - tf.derivative(x)).abs() < 1e-6);
            }
        }
    }
}
