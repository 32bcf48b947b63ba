use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    Truncated,
}

impl FromStr for Boundary {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "periodic" => Ok(Boundary::Periodic),
            "truncated" => Ok(Boundary::Truncated),
            other => Err(LabError::invalid("boundary", format!("unknown boundary `{other}`"))),
        }
    }
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Boundary::Periodic => "periodic",
            Boundary::Truncated => "truncated",
        })
    }
}

/// Uniform cell-centred lattice on `[x_min, x_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    x_min: f64,
    x_max: f64,
    n_cells: usize,
    boundary: Boundary,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n_cells: usize, boundary: Boundary) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) || x_max <= x_min {
            return Err(LabError::invalid("grid", format!("need x_min < x_max, got [{x_min}, {x_max}]")));
        }
        if n_cells < 2 {
            return Err(LabError::invalid("n_cells", "need at least 2 cells"));
        }
        Ok(Self { x_min, x_max, n_cells, boundary })
    }

    /// Grid with spacing `dx` on `[-half_width, half_width)`; the width is rounded
    /// to a whole number of cells.
    pub fn centered(half_width: f64, dx: f64, boundary: Boundary) -> Result<Self> {
        if !(dx > 0.0) {
            return Err(LabError::invalid("dx", "must be positive"));
        }
        let n = (2.0 * half_width / dx).round() as usize;
        let hw = 0.5 * n as f64 * dx;
        Self::new(-hw, hw, n, boundary)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn n_cells(&self) -> usize {
        self.n_cells
    }
    pub fn boundary(&self) -> Boundary {
        self.boundary
    }
    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_cells as f64
    }
    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn center(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx()
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_cells).map(move |i| self.center(i))
    }

    /// Index of the cell whose centre is closest to `x` (clamped to the grid).
    pub fn nearest(&self, x: f64) -> usize {
        let k = ((x - self.x_min) / self.dx() - 0.5).round();
        k.clamp(0.0, (self.n_cells - 1) as f64) as usize
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }
}

/// Real values on the cells of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: Grid1D,
    pub values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid1D) -> Self {
        Self { grid, values: vec![0.0; grid.n_cells()] }
    }

    pub fn constant(grid: Grid1D, c: f64) -> Self {
        Self { grid, values: vec![c; grid.n_cells()] }
    }

    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> f64) -> Self {
        Self { grid, values: grid.centers().map(f).collect() }
    }

    pub fn from_values(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(LabError::invalid(
                "values",
                format!("expected {} entries, got {}", grid.n_cells(), values.len()),
            ));
        }
        Ok(Self { grid, values })
    }

    /// `1/dx` in the cell nearest to `y`, zero elsewhere: unit mass on the lattice.
    pub fn delta(grid: Grid1D, y: f64) -> Self {
        let mut f = Self::zeros(grid);
        f.values[grid.nearest(y)] = 1.0 / grid.dx();
        f
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn sum_dx(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.dx()
    }

    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centers_increase_and_spacing_matches() {
        let g = Grid1D::new(-1.0, 1.0, 40, Boundary::Periodic).unwrap();
        assert!((g.dx() - 0.05).abs() < 1e-15);
        let c: Vec<f64> = g.centers().collect();
        assert!(c.windows(2).all(|w| w[1] > w[0]));
        assert!((c[0] - (-0.975)).abs() < 1e-12);
        assert_eq!(g.nearest(0.0), 20);
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(Grid1D::new(0.0, 1.0, 1, Boundary::Periodic).is_err());
        assert!(Grid1D::new(1.0, 1.0, 10, Boundary::Periodic).is_err());
    }

    #[test]
    fn delta_has_unit_mass() {
        let g = Grid1D::centered(2.0, 0.1, Boundary::Periodic).unwrap();
        assert!((Field::delta(g, 0.3).sum_dx() - 1.0).abs() < 1e-12);
    }
}
