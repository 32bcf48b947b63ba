use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

use super::asep::{AsepTrajectory, OccupancyConfig};

/// Jump rates `(p, q) = ((1 - eps^{1/2}) / 2, (1 + eps^{1/2}) / 2)` of the weakly asymmetric process.
pub fn wasep_rates(eps: f64) -> (f64, f64) {
    let s = eps.sqrt();
    (0.5 * (1.0 - s), 0.5 * (1.0 + s))
}

/// Unscaled height slope entering site `x`: `h(x) - h(x - 1) = 1 - 2 eta(x)`.
fn step(eta: &OccupancyConfig, x: i64) -> i64 {
    1 - 2 * eta.get(x) as i64
}

/// Height profile `h_eps(T, eps x) = eps^{1/2} h(eps^{-2} T, x)` on the ring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightProfile {
    pub eps: f64,
    /// Macroscopic time.
    pub time: f64,
    /// Unscaled integer heights at sites `0..N`.
    pub raw: Vec<i64>,
    pub occupation: OccupancyConfig,
}

impl HeightProfile {
    pub fn from_config(occupation: OccupancyConfig, eps: f64, h_origin: i64, time: f64) -> Self {
        let mut raw = Vec::with_capacity(occupation.len());
        let mut h = h_origin;
        raw.push(h);
        for x in 1..occupation.len() as i64 {
            h += step(&occupation, x);
            raw.push(h);
        }
        Self { eps, time, raw, occupation }
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn position(&self, i: usize) -> f64 {
        self.eps * i as f64
    }

    pub fn height(&self, i: usize) -> f64 {
        self.eps.sqrt() * self.raw[i] as f64
    }

    /// `(h(x) - h(x - eps)) / eps`, periodic through the occupations.
    pub fn grad_minus(&self, i: usize) -> f64 {
        self.eps.sqrt() * step(&self.occupation, i as i64) as f64 / self.eps
    }

    /// `(h(x + eps) - h(x)) / eps`.
    pub fn grad_plus(&self, i: usize) -> f64 {
        self.eps.sqrt() * step(&self.occupation, i as i64 + 1) as f64 / self.eps
    }

    /// Local minimum at site `i` (a right jump across `(i, i+1)` is possible).
    pub fn local_min(&self, i: usize) -> bool {
        step(&self.occupation, i as i64) < 0 && step(&self.occupation, i as i64 + 1) > 0
    }

    pub fn local_max(&self, i: usize) -> bool {
        step(&self.occupation, i as i64) > 0 && step(&self.occupation, i as i64 + 1) < 0
    }

    /// Rows `(t, x, h)`.
    pub fn write_csv<W: Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        for i in 0..self.len() {
            w.write_record([self.time.to_string(), self.position(i).to_string(), self.height(i).to_string()])?;
        }
        Ok(())
    }
}

/// Rescaled height profiles of a trajectory at the given macroscopic times.
///
/// The height at site 0 moves by `+2` (`-2`) for each right (left) jump across bond `(0, 1)`.
pub fn wasep_height(trajectory: &AsepTrajectory, eps: f64, times: &[f64]) -> Result<Vec<HeightProfile>> {
    if !(eps > 0.0 && eps <= 0.25) {
        return Err(LabError::invalid("eps", "scale must lie in (0, 0.25]"));
    }
    let mut out = Vec::with_capacity(times.len());
    let mut state = trajectory.initial;
    let mut h0 = 0i64;
    let mut events = trajectory.events.iter().peekable();
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    for &t in &sorted {
        let micro = t / (eps * eps);
        while let Some(e) = events.next_if(|e| e.time <= micro) {
            if e.bond == 0 {
                h0 += if e.rightward { 2 } else { -2 };
            }
            state = state.swapped(e.bond);
        }
        out.push(HeightProfile::from_config(state, eps, h0, t));
    }
    Ok(out)
}

/// Both sides of the two local-pattern identities at the middle of a three-site patch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternCheck {
    /// Unscaled slopes to the left and right of the middle site.
    pub slopes: (i64, i64),
    pub min_minus_max: f64,
    pub curvature_side: f64,
    pub min_plus_max: f64,
    pub gradient_side: f64,
}

impl PatternCheck {
    pub fn holds_exactly(&self) -> bool {
        self.min_minus_max == self.curvature_side && self.min_plus_max == self.gradient_side
    }
}

/// Evaluates `1_min - 1_max = eps^{3/2}/2 grad- grad+ h` and
/// `1_min + 1_max = -eps/2 grad-h grad+h + 1/2` on all four slope patterns.
pub fn local_pattern_identities(eps: f64) -> Vec<PatternCheck> {
    let mut out = Vec::with_capacity(4);
    for left in [1i64, -1] {
        for right in [1i64, -1] {
            // sites 0, 1, 2 with eta chosen to produce the slopes into sites 1 and 2
            let eta = OccupancyConfig::from_sites(&[0, ((1 - left) / 2) as u8, ((1 - right) / 2) as u8]).expect("valid pattern");
            let h = HeightProfile::from_config(eta, eps, 0, 0.0);
            let (gm, gp) = (h.grad_minus(1), h.grad_plus(1));
            let is_min = h.local_min(1) as u8 as f64;
            let is_max = h.local_max(1) as u8 as f64;
            out.push(PatternCheck {
                slopes: (left, right),
                min_minus_max: is_min - is_max,
                curvature_side: 0.5 * eps.powf(1.5) * (gp - gm) / eps,
                min_plus_max: is_min + is_max,
                gradient_side: -0.5 * eps * gm * gp + 0.5,
            });
        }
    }
    out
}
