use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::rng::{self, Purpose};
use crate::spde::{steps_for, BLOW_UP_THRESHOLD};

/// Per-site variance of the product Gaussian law left invariant by
/// [`evolve_discrete`]: the Laplacian drift balances the gradient noise at 1/2.
pub const STATIONARY_VARIANCE: f64 = 0.5;

/// Field on the periodic lattice `Z_N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingField {
    values: Vec<f64>,
}

impl RingField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 3 {
            return Err(LabError::invalid("N", "ring needs at least 3 sites"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LabError::invalid("phi", "entries must be finite"));
        }
        Ok(Self { values })
    }

    pub fn constant(n: usize, c: f64) -> Result<Self> {
        Self::new(vec![c; n])
    }

    /// I.i.d. standard Gaussian sites.
    pub fn gaussian(n: usize, seed: u64, replica: u64) -> Result<Self> {
        Self::gaussian_with_variance(n, 1.0, seed, replica)
    }

    pub fn gaussian_with_variance(n: usize, variance: f64, seed: u64, replica: u64) -> Result<Self> {
        let mut r = rng::stream(seed, replica, Purpose::Lattice);
        let sd = variance.sqrt();
        Self::new((0..n).map(|_| sd * r.sample::<f64, _>(StandardNormal)).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, x: i64) -> f64 {
        self.values[x.rem_euclid(self.values.len() as i64) as usize]
    }

    pub fn sum(&self) -> f64 {
        crate::stats::pairwise_sum(&self.values)
    }
}

/// The quadratic part of the drift at every site.
pub fn nonlinear_drift(phi: &RingField) -> Vec<f64> {
    (0..phi.len() as i64)
        .map(|x| {
            let (l, c, r) = (phi.at(x - 1), phi.at(x), phi.at(x + 1));
            r * c - c * l + r * r - l * l
        })
        .collect()
}

/// Lattice Laplacian plus the quadratic nonlinearity, periodic indices.
pub fn discrete_drift(phi: &RingField) -> RingField {
    let nl = nonlinear_drift(phi);
    let values = (0..phi.len() as i64)
        .zip(nl)
        .map(|(x, n)| phi.at(x + 1) - 2.0 * phi.at(x) + phi.at(x - 1) + n)
        .collect();
    RingField { values }
}

/// Euler-Maruyama with conservative noise `dB_{x+1} - dB_x`.
pub fn evolve_discrete(phi0: &RingField, dt: f64, t_end: f64, seed: u64, replica: u64, noise: bool) -> Result<RingField> {
    let steps = steps_for(t_end, dt)?;
    let n = phi0.len();
    let mut r = rng::stream(seed, replica, Purpose::Lattice);
    let sd = dt.sqrt();
    let mut phi = phi0.clone();
    let mut db = vec![0.0; n];
    for step in 0..steps {
        let drift = discrete_drift(&phi);
        if noise {
            for b in db.iter_mut() {
                *b = sd * r.sample::<f64, _>(StandardNormal);
            }
        }
        for x in 0..n {
            let kick = if noise { db[(x + 1) % n] - db[x] } else { 0.0 };
            let v = phi.values[x] + drift.values[x] * dt + kick;
            if !(v.abs() <= BLOW_UP_THRESHOLD) {
                return Err(LabError::BlowUp { step, cell: x, value: v });
            }
            phi.values[x] = v;
        }
    }
    Ok(phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;
    use proptest::prelude::*;

    #[test]
    fn constant_field_has_no_drift() {
        let d = discrete_drift(&RingField::constant(7, 1.3).unwrap());
        assert!(d.values().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn hand_evaluated_drift() {
        let d = discrete_drift(&RingField::new(vec![1.0, 0.0, 0.0, 0.0]).unwrap());
        // site 0: -2; site 1: 1 + (0 - 0) + (0 - 1) = 0; site 3: 1 + 0 + 1 - 0 = 2
        assert_eq!(d.values(), &[-2.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn noise_free_constant_stays_put_and_mass_is_conserved() {
        let c = RingField::constant(6, 0.7).unwrap();
        let out = evolve_discrete(&c, 0.01, 1.0, 1, 0, false).unwrap();
        assert!(out.values().iter().all(|v| (v - 0.7).abs() < 1e-14));
        let g = RingField::gaussian(12, 3, 0).unwrap();
        let out = evolve_discrete(&g, 0.001, 0.5, 3, 1, true).unwrap();
        assert!((out.sum() - g.sum()).abs() < 1e-10);
    }

    fn second_moments(variance: f64, reps: u64) -> [(Vec<f64>, Vec<f64>); 2] {
        let n = 8;
        let (mut sq0, mut sq1, mut nb0, mut nb1) = (vec![], vec![], vec![], vec![]);
        for k in 0..reps {
            let g = RingField::gaussian_with_variance(n, variance, 17, k).unwrap();
            let out = evolve_discrete(&g, 0.002, 0.5, 18, k, true).unwrap();
            sq0.push(g.at(0).powi(2));
            sq1.push(out.at(0).powi(2));
            nb0.push(g.at(0) * g.at(1));
            nb1.push(out.at(0) * out.at(1));
        }
        [(sq0, sq1), (nb0, nb1)]
    }

    fn gap(a: &[f64], b: &[f64]) -> f64 {
        let se = (stats::std_error(a).powi(2) + stats::std_error(b).powi(2)).sqrt();
        (stats::mean(b) - stats::mean(a)) / se
    }

    #[test]
    fn gaussian_product_law_is_stationary() {
        for (before, after) in second_moments(STATIONARY_VARIANCE, 3000) {
            assert!(gap(&before, &after).abs() < 5.0);
        }
    }

    #[test]
    fn unit_variance_start_relaxes_towards_one_half() {
        let [(sq0, sq1), _] = second_moments(1.0, 3000);
        assert!(gap(&sq0, &sq1) < -5.0);
    }

    proptest! {
        #[test]
        fn nonlinearity_is_a_discrete_gradient(v in prop::collection::vec(-3.0f64..3.0, 3..24)) {
            let phi = RingField::new(v).unwrap();
            let nl = nonlinear_drift(&phi);
            let pairing: f64 = phi.values().iter().zip(&nl).map(|(a, b)| a * b).sum();
            let scale = phi.values().iter().map(|a| a.abs()).fold(1.0f64, f64::max).powi(3) * phi.len() as f64;
            prop_assert!(pairing.abs() < 1e-12 * scale);
            let total: f64 = nl.iter().sum();
            prop_assert!(total.abs() < 1e-12 * scale);
        }
    }
}
