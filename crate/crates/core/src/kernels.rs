//! Mollifiers and the kernels derived from them.
//!
//! A mollifier `phi_eps(x) = phi(x / eps) / eps` is supported on `[-eps, eps]`.
//! Its self-convolution `R = phi * phi` (supported on `[-2 eps, 2 eps]`), the
//! derivatives of `R`, and the primitive `r` with `r' = R`, `r(0) = 0` are
//! tabulated once per shape at unit width and rescaled on evaluation.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use crate::error::{LabError, Result};
use crate::quadrature::cached_rule;

/// Number of intervals in every kernel table.
pub const TABLE_INTERVALS: usize = 4096;

/// Accuracy demanded of the tabulated kernels.
pub const KERNEL_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MollifierShape {
    /// `c exp(-1 / (1 - x^2))` on `[-1, 1]`.
    Bump,
    /// Cubic B-spline (triangle convolved with itself) rescaled to `[-1, 1]`.
    TriangleConvolved,
}

impl FromStr for MollifierShape {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bump" => Ok(MollifierShape::Bump),
            "triangle-convolved" => Ok(MollifierShape::TriangleConvolved),
            other => Err(LabError::invalid("shape", format!("unknown mollifier shape `{other}`"))),
        }
    }
}

impl fmt::Display for MollifierShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MollifierShape::Bump => "bump",
            MollifierShape::TriangleConvolved => "triangle-convolved",
        })
    }
}

fn bump_norm() -> f64 {
    static NORM: OnceLock<f64> = OnceLock::new();
    *NORM.get_or_init(|| {
        let mass = crate::quadrature::integrate(|x| (-1.0 / (1.0 - x * x)).exp(), -1.0, 1.0, 64, 16);
        1.0 / mass
    })
}

impl MollifierShape {
    fn unit_breaks(self) -> &'static [f64] {
        match self {
            MollifierShape::Bump => &[],
            MollifierShape::TriangleConvolved => &[-0.5, 0.0, 0.5],
        }
    }

    /// Unit-width profile, computed from `|z|` so it is even bit for bit.
    fn unit_value(self, z: f64) -> f64 {
        let a = z.abs();
        if a >= 1.0 {
            return 0.0;
        }
        match self {
            MollifierShape::Bump => bump_norm() * (-1.0 / (1.0 - a * a)).exp(),
            MollifierShape::TriangleConvolved => {
                let s = 2.0 * a;
                let b = if s < 1.0 {
                    (4.0 - 6.0 * s * s + 3.0 * s * s * s) / 6.0
                } else {
                    (2.0 - s).powi(3) / 6.0
                };
                2.0 * b
            }
        }
    }

    /// Derivative of the unit profile, odd bit for bit.
    fn unit_derivative(self, z: f64) -> f64 {
        let a = z.abs();
        if a >= 1.0 || a == 0.0 {
            return 0.0;
        }
        let magnitude = match self {
            MollifierShape::Bump => {
                let q = 1.0 - a * a;
                bump_norm() * (-1.0 / q).exp() * 2.0 * a / (q * q)
            }
            MollifierShape::TriangleConvolved => {
                let s = 2.0 * a;
                let db = if s < 1.0 { 2.0 * s - 1.5 * s * s } else { 0.5 * (2.0 - s).powi(2) };
                4.0 * db
            }
        };
        -z.signum() * magnitude
    }
}

/// Values and slopes at equally spaced nodes, interpolated by cubic Hermite.
#[derive(Debug, Clone)]
struct HermiteTable {
    lo: f64,
    h: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl HermiteTable {
    fn eval(&self, x: f64) -> f64 {
        let n = self.values.len() - 1;
        let s = ((x - self.lo) / self.h).clamp(0.0, n as f64);
        let k = (s.floor() as usize).min(n - 1);
        let u = s - k as f64;
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (d0, d1) = (self.slopes[k] * self.h, self.slopes[k + 1] * self.h);
        let u2 = u * u;
        let u3 = u2 * u;
        (2.0 * u3 - 3.0 * u2 + 1.0) * y0
            + (u3 - 2.0 * u2 + u) * d0
            + (-2.0 * u3 + 3.0 * u2) * y1
            + (u3 - u2) * d1
    }

    fn last(&self) -> f64 {
        *self.values.last().expect("table is non-empty")
    }
}

/// Unit-width tables of one shape.
#[derive(Debug)]
struct UnitTables {
    /// Cumulative distribution of the mollifier on `[-1, 1]`.
    cdf: HermiteTable,
    /// `R` on `[0, 2]`, slopes `R'`.
    cov: HermiteTable,
    /// `R'` on `[0, 2]`, slopes `R''`.
    cov_d: HermiteTable,
    /// `R''` at the nodes (linear interpolation).
    cov_dd: Vec<f64>,
    /// `r` on `[0, 2]`, slopes `R`.
    prim: HermiteTable,
}

fn unit_tables(shape: MollifierShape) -> &'static UnitTables {
    static BUMP: OnceLock<UnitTables> = OnceLock::new();
    static SPLINE: OnceLock<UnitTables> = OnceLock::new();
    match shape {
        MollifierShape::Bump => BUMP.get_or_init(|| build_unit_tables(shape)),
        MollifierShape::TriangleConvolved => SPLINE.get_or_init(|| build_unit_tables(shape)),
    }
}

const ORDER: usize = 10;
const PANELS_PER_UNIT: f64 = 24.0;

/// `(R, R', R'')` of the unit shape at lag `z >= 0`.
fn unit_convolutions(shape: MollifierShape, z: f64) -> [f64; 3] {
    let (nodes, weights) = cached_rule(ORDER);
    let (a, b) = (z - 1.0, 1.0);
    if a >= b {
        return [0.0; 3];
    }
    let mut cuts: Vec<f64> = vec![a, b];
    for &c in shape.unit_breaks() {
        for p in [c, z - c] {
            if p > a && p < b {
                cuts.push(p);
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut acc = [0.0; 3];
    for w in cuts.windows(2) {
        let panels = ((w[1] - w[0]) * PANELS_PER_UNIT).ceil().max(1.0) as usize;
        let ph = (w[1] - w[0]) / panels as f64;
        for p in 0..panels {
            let mid = w[0] + (p as f64 + 0.5) * ph;
            for (x, wt) in nodes.iter().zip(&weights) {
                let y = mid + 0.5 * ph * x;
                let q = 0.5 * ph * wt;
                let (f, fd) = (shape.unit_value(y), shape.unit_derivative(y));
                let (g, gd) = (shape.unit_value(z - y), shape.unit_derivative(z - y));
                acc[0] += q * f * g;
                acc[1] += q * f * gd;
                acc[2] += q * fd * gd;
            }
        }
    }
    acc
}

fn build_unit_tables(shape: MollifierShape) -> UnitTables {
    let n = TABLE_INTERVALS;

    // Mollifier distribution function on [-1, 1]; breakpoints fall on nodes.
    let hc = 2.0 / n as f64;
    let (nodes, weights) = cached_rule(ORDER);
    let mut cdf_vals = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    cdf_vals.push(0.0);
    for k in 0..n {
        let mid = -1.0 + (k as f64 + 0.5) * hc;
        let piece: f64 = nodes
            .iter()
            .zip(&weights)
            .map(|(x, w)| 0.5 * hc * w * shape.unit_value(mid + 0.5 * hc * x))
            .sum();
        acc += piece;
        cdf_vals.push(acc);
    }
    let cdf_slopes = (0..=n).map(|k| shape.unit_value(-1.0 + k as f64 * hc)).collect();
    let cdf = HermiteTable { lo: -1.0, h: hc, values: cdf_vals, slopes: cdf_slopes };

    // Self-convolution on [0, 2] at nodes and midpoints.
    let h = 2.0 / n as f64;
    let samples: Vec<[f64; 3]> = (0..=2 * n).map(|j| unit_convolutions(shape, 0.5 * h * j as f64)).collect();
    let at = |k: usize| samples[2 * k];
    let mut cov_vals: Vec<f64> = (0..=n).map(|k| at(k)[0]).collect();
    let mut cov_slopes: Vec<f64> = (0..=n).map(|k| at(k)[1]).collect();
    let mut cov_dd: Vec<f64> = (0..=n).map(|k| at(k)[2]).collect();
    // Exact values forced by symmetry and support.
    cov_slopes[0] = 0.0;
    cov_vals[n] = 0.0;
    cov_slopes[n] = 0.0;
    cov_dd[n] = 0.0;

    let mut prim_vals = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    prim_vals.push(0.0);
    for k in 0..n {
        acc += h / 6.0 * (samples[2 * k][0] + 4.0 * samples[2 * k + 1][0] + samples[2 * k + 2][0]);
        prim_vals.push(acc);
    }

    UnitTables {
        cdf,
        cov: HermiteTable { lo: 0.0, h, values: cov_vals.clone(), slopes: cov_slopes.clone() },
        cov_d: HermiteTable { lo: 0.0, h, values: cov_slopes, slopes: cov_dd.clone() },
        cov_dd,
        prim: HermiteTable { lo: 0.0, h, values: prim_vals, slopes: cov_vals },
    }
}

/// Smooth, symmetric, compactly supported probability density of half-width `epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mollifier {
    shape: MollifierShape,
    epsilon: f64,
}

pub fn build_mollifier(shape: MollifierShape, epsilon: f64) -> Result<Mollifier> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(LabError::invalid("epsilon", format!("must be positive and finite, got {epsilon}")));
    }
    Ok(Mollifier { shape, epsilon })
}

impl Mollifier {
    pub fn shape(&self) -> MollifierShape {
        self.shape
    }

    /// Support half-width.
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn value(&self, x: f64) -> f64 {
        self.shape.unit_value(x / self.epsilon) / self.epsilon
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.shape.unit_derivative(x / self.epsilon) / (self.epsilon * self.epsilon)
    }

    /// `int_{-inf}^x phi`.
    pub fn cdf(&self, x: f64) -> f64 {
        let z = x / self.epsilon;
        if z <= -1.0 {
            0.0
        } else if z >= 1.0 {
            1.0
        } else {
            unit_tables(self.shape).cdf.eval(z)
        }
    }

    /// Total mass by Gauss-Legendre quadrature over the support.
    pub fn mass(&self) -> f64 {
        let e = self.epsilon;
        let breaks: Vec<f64> = self.shape.unit_breaks().iter().map(|b| b * e).collect();
        crate::quadrature::integrate_piecewise(|x| self.value(x), -e, e, &breaks, 64.0 / e, 16)
    }
}

/// Covariance kernel `R = phi * phi` of smoothed noise, with derivatives and primitive.
#[derive(Debug, Clone, Copy)]
pub struct KernelSet {
    mollifier: Mollifier,
    tables: &'static UnitTables,
}

pub fn derive_kernels(phi: &Mollifier) -> Result<KernelSet> {
    let tables = unit_tables(phi.shape);
    let mass_error = (tables.prim.last() - 0.5).abs();
    if mass_error > KERNEL_TOLERANCE {
        return Err(LabError::Quadrature {
            what: "half mass of covariance kernel",
            tolerance: KERNEL_TOLERANCE,
            error: mass_error,
        });
    }
    let cdf_error = (tables.cdf.last() - 1.0).abs();
    if cdf_error > KERNEL_TOLERANCE {
        return Err(LabError::Quadrature { what: "mollifier mass", tolerance: KERNEL_TOLERANCE, error: cdf_error });
    }
    Ok(KernelSet { mollifier: *phi, tables })
}

impl KernelSet {
    pub fn mollifier(&self) -> &Mollifier {
        &self.mollifier
    }

    pub fn epsilon(&self) -> f64 {
        self.mollifier.epsilon
    }

    /// Half-width of the support of `R`.
    pub fn support_radius(&self) -> f64 {
        2.0 * self.mollifier.epsilon
    }

    fn unit(&self, x: f64) -> Option<f64> {
        let z = x.abs() / self.mollifier.epsilon;
        (z < 2.0).then_some(z)
    }

    /// `R(x)`.
    pub fn covariance(&self, x: f64) -> f64 {
        self.unit(x).map_or(0.0, |z| self.tables.cov.eval(z) / self.mollifier.epsilon)
    }

    /// `R(0)`.
    pub fn at_zero(&self) -> f64 {
        self.tables.cov.values[0] / self.mollifier.epsilon
    }

    /// `R'(x)`; exactly odd, so `R'(0) = 0`.
    pub fn covariance_derivative(&self, x: f64) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        let e = self.mollifier.epsilon;
        self.unit(x).map_or(0.0, |z| x.signum() * self.tables.cov_d.eval(z) / (e * e))
    }

    /// `R''(x)`, linearly interpolated.
    pub fn covariance_second_derivative(&self, x: f64) -> f64 {
        let e = self.mollifier.epsilon;
        self.unit(x).map_or(0.0, |z| {
            let s = z / self.tables.cov.h;
            let k = (s.floor() as usize).min(TABLE_INTERVALS - 1);
            let u = s - k as f64;
            let dd = &self.tables.cov_dd;
            ((1.0 - u) * dd[k] + u * dd[k + 1]) / (e * e * e)
        })
    }

    /// Primitive `r` with `r' = R`, `r(0) = 0`; equals `sgn(x) / 2` outside the support.
    pub fn primitive(&self, x: f64) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        match self.unit(x) {
            Some(z) => x.signum() * self.tables.prim.eval(z),
            None => 0.5 * x.signum(),
        }
    }
}

/// Kernels of the smoothed initial data: `A = psi * psi` and `a' = A`, `a(0) = 0`.
#[derive(Debug, Clone, Copy)]
pub struct InitKernel {
    kernels: KernelSet,
}

pub fn derive_init_kernel(psi: &Mollifier) -> Result<InitKernel> {
    Ok(InitKernel { kernels: derive_kernels(psi)? })
}

impl InitKernel {
    pub fn psi(&self) -> &Mollifier {
        self.kernels.mollifier()
    }

    /// `A(x)`, the covariance of the initial slope field.
    pub fn covariance(&self, x: f64) -> f64 {
        self.kernels.covariance(x)
    }

    /// `a(x)`.
    pub fn primitive(&self, x: f64) -> f64 {
        self.kernels.primitive(x)
    }

    pub fn support_radius(&self) -> f64 {
        self.kernels.support_radius()
    }

    pub fn as_kernel_set(&self) -> &KernelSet {
        &self.kernels
    }
}

/// Samples `f` at `points` equally spaced abscissae on `[lo, hi]` and writes
/// `x,value` rows after a `# schema=v1` line.
pub fn write_kernel_csv<W: std::io::Write>(
    mut out: W,
    f: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    points: usize,
) -> Result<()> {
    if points < 2 || !(hi > lo) {
        return Err(LabError::invalid("points", "need at least 2 points on a non-empty interval"));
    }
    writeln!(out, "# schema=v1")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "value"])?;
    for i in 0..points {
        let x = lo + (hi - lo) * i as f64 / (points - 1) as f64;
        w.write_record([x.to_string(), f(x).to_string()])?;
    }
    w.flush()?;
    Ok(())
}
