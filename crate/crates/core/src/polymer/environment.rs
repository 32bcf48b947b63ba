use crate::error::Result;
use crate::grid::{Field, Grid1D};
use crate::kernels::Mollifier;
use crate::noise::{MollifiedStream, NoiseField, NoiseSource, Stencil};

/// One realization of the smoothed noise `eta` (and its derivative) seen by
/// polymer paths. Path step `k` reads time slice `n_steps - 1 - k`, i.e. the
/// noise is traversed backwards in time.
#[derive(Debug, Clone)]
pub struct Environment {
    grid: Grid1D,
    dt: f64,
    n_steps: usize,
    eta: Vec<f64>,
    deta: Vec<f64>,
    r0: f64,
}

/// Linear interpolation weights between two neighbouring cell centres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    pub cell: usize,
    pub frac: f64,
    pub clamped: bool,
}

impl Environment {
    /// Identically zero noise; `r0` is the Ito correction to apply (usually 0).
    pub fn quiet(grid: Grid1D, dt: f64, n_steps: usize, r0: f64) -> Self {
        Self { grid, dt, n_steps, eta: Vec::new(), deta: Vec::new(), r0 }
    }

    /// Fresh realization: white noise replica `replica` of `seed`, mollified by `phi`.
    pub fn sample(grid: Grid1D, dt: f64, n_steps: usize, phi: &Mollifier, seed: u64, replica: u64) -> Result<Self> {
        let mut stream = MollifiedStream::new(&grid, dt, phi, seed, replica)?;
        let n = grid.n_cells();
        let mut eta = vec![0.0; n * n_steps];
        let mut deta = vec![0.0; n * n_steps];
        for (e, d) in eta.chunks_exact_mut(n).zip(deta.chunks_exact_mut(n)) {
            stream.fill_with_derivative(e, d);
        }
        let r0 = Stencil::new(phi, grid.dx())?.covariance(0);
        Ok(Self { grid, dt, n_steps, eta, deta, r0 })
    }

    /// As [`Environment::sample`] without the derivative field.
    pub fn sample_field_only(grid: Grid1D, dt: f64, n_steps: usize, phi: &Mollifier, seed: u64, replica: u64) -> Result<Self> {
        let mut stream = MollifiedStream::new(&grid, dt, phi, seed, replica)?;
        let n = grid.n_cells();
        let mut eta = vec![0.0; n * n_steps];
        for e in eta.chunks_exact_mut(n) {
            stream.fill(e);
        }
        let r0 = Stencil::new(phi, grid.dx())?.covariance(0);
        Ok(Self { grid, dt, n_steps, eta, deta: Vec::new(), r0 })
    }

    /// Wraps an existing smoothed field (no derivative available).
    pub fn from_field(eta: &NoiseField, r0: f64) -> Self {
        Self {
            grid: eta.grid,
            dt: eta.dt,
            n_steps: eta.n_steps,
            eta: eta.values().to_vec(),
            deta: Vec::new(),
            r0,
        }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }
    pub fn is_quiet(&self) -> bool {
        self.eta.is_empty()
    }
    pub fn has_derivative(&self) -> bool {
        !self.deta.is_empty()
    }

    /// Lattice `R(0)` used for the Ito correction.
    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn locate(&self, x: f64) -> Location {
        let n = self.grid.n_cells();
        let s = (x - self.grid.x_min()) / self.grid.dx() - 0.5;
        if s < 0.0 {
            Location { cell: 0, frac: 0.0, clamped: true }
        } else if s >= (n - 1) as f64 {
            Location { cell: n - 2, frac: 1.0, clamped: s > (n - 1) as f64 }
        } else {
            let cell = s.floor() as usize;
            Location { cell, frac: s - cell as f64, clamped: false }
        }
    }

    fn slice_offset(&self, path_step: usize) -> usize {
        (self.n_steps - 1 - path_step) * self.grid.n_cells()
    }

    /// `eta(t - s_k, x)` at a located point.
    pub fn eta_at(&self, path_step: usize, loc: Location) -> f64 {
        if self.eta.is_empty() {
            return 0.0;
        }
        let o = self.slice_offset(path_step) + loc.cell;
        (1.0 - loc.frac) * self.eta[o] + loc.frac * self.eta[o + 1]
    }

    /// Spatial derivative of the noise at a located point.
    pub fn deta_at(&self, path_step: usize, loc: Location) -> f64 {
        if self.deta.is_empty() {
            return 0.0;
        }
        let o = self.slice_offset(path_step) + loc.cell;
        (1.0 - loc.frac) * self.deta[o] + loc.frac * self.deta[o + 1]
    }

    /// The time slice read by path step `k`, as a field (for solver cross-checks).
    pub fn slice_for_path_step(&self, path_step: usize) -> Field {
        let n = self.grid.n_cells();
        let values = if self.eta.is_empty() {
            vec![0.0; n]
        } else {
            let o = self.slice_offset(path_step);
            self.eta[o..o + n].to_vec()
        };
        Field { grid: self.grid, values }
    }
}

/// Linear interpolation of a lattice field (constant beyond the end cells).
pub fn interpolate(field: &Field, x: f64) -> f64 {
    let g = &field.grid;
    let n = g.n_cells();
    let s = (x - g.x_min()) / g.dx() - 0.5;
    if s <= 0.0 {
        return field.values[0];
    }
    if s >= (n - 1) as f64 {
        return field.values[n - 1];
    }
    let i = s.floor() as usize;
    let u = s - i as f64;
    (1.0 - u) * field.values[i] + u * field.values[i + 1]
}
