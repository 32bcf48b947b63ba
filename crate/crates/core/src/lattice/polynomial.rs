use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, HashMap};
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{LabError, Result};

/// Default cap on the total degree of a polynomial given to the generator.
pub const DEFAULT_MAX_DEGREE: u32 = 6;

/// Sorted `(site, power)` pairs with positive powers.
pub type Monomial = Vec<(usize, u32)>;

/// Sparse polynomial in finitely many lattice variables.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LocalPolynomial {
    terms: BTreeMap<Monomial, f64>,
}

impl LocalPolynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self::term(c, &[])
    }

    pub fn var(site: usize) -> Self {
        Self::term(1.0, &[(site, 1)])
    }

    /// `coef * prod phi_site^power`; repeated sites are merged.
    pub fn term(coef: f64, factors: &[(usize, u32)]) -> Self {
        let mut m: BTreeMap<usize, u32> = BTreeMap::new();
        for &(s, p) in factors {
            *m.entry(s).or_default() += p;
        }
        let key: Monomial = m.into_iter().filter(|&(_, p)| p > 0).collect();
        let mut out = Self::zero();
        out.push(key, coef);
        out
    }

    fn push(&mut self, key: Monomial, coef: f64) {
        if coef == 0.0 {
            return;
        }
        match self.terms.entry(key) {
            Entry::Occupied(mut o) => {
                *o.get_mut() += coef;
                if *o.get() == 0.0 {
                    o.remove();
                }
            }
            Entry::Vacant(v) => {
                v.insert(coef);
            }
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(k, &v)| (k, v))
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|m| m.iter().map(|&(_, p)| p).sum()).max().unwrap_or(0)
    }

    /// Largest site index appearing in the polynomial.
    pub fn max_site(&self) -> Option<usize> {
        self.terms.keys().filter_map(|m| m.last().map(|&(s, _)| s)).max()
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = Self::zero();
        for (k, v) in self.terms() {
            out.push(k.clone(), v * c);
        }
        out
    }

    /// Partial derivative in the variable at `site`.
    pub fn derivative(&self, site: usize) -> Self {
        let mut out = Self::zero();
        for (k, v) in self.terms() {
            if let Some(i) = k.iter().position(|&(s, _)| s == site) {
                let p = k[i].1;
                let mut key = k.clone();
                if p == 1 {
                    key.remove(i);
                } else {
                    key[i].1 = p - 1;
                }
                out.push(key, v * p as f64);
            }
        }
        out
    }

    pub fn eval(&self, phi: &[f64]) -> f64 {
        self.terms().map(|(k, v)| v * k.iter().map(|&(s, p)| phi[s].powi(p as i32)).product::<f64>()).sum()
    }
}

impl Add for &LocalPolynomial {
    type Output = LocalPolynomial;
    fn add(self, rhs: &LocalPolynomial) -> LocalPolynomial {
        let mut out = self.clone();
        for (k, v) in rhs.terms() {
            out.push(k.clone(), v);
        }
        out
    }
}

impl Add for LocalPolynomial {
    type Output = LocalPolynomial;
    fn add(self, rhs: LocalPolynomial) -> LocalPolynomial {
        &self + &rhs
    }
}

impl Neg for &LocalPolynomial {
    type Output = LocalPolynomial;
    fn neg(self) -> LocalPolynomial {
        self.scale(-1.0)
    }
}

impl Sub for &LocalPolynomial {
    type Output = LocalPolynomial;
    fn sub(self, rhs: &LocalPolynomial) -> LocalPolynomial {
        self + &(-rhs)
    }
}

impl Mul for &LocalPolynomial {
    type Output = LocalPolynomial;
    fn mul(self, rhs: &LocalPolynomial) -> LocalPolynomial {
        let mut out = LocalPolynomial::zero();
        for (a, x) in self.terms() {
            for (b, y) in rhs.terms() {
                let factors: Vec<(usize, u32)> = a.iter().chain(b.iter()).copied().collect();
                let t = LocalPolynomial::term(x * y, &factors);
                for (k, v) in t.terms() {
                    out.push(k.clone(), v);
                }
            }
        }
        out
    }
}

impl Mul for LocalPolynomial {
    type Output = LocalPolynomial;
    fn mul(self, rhs: LocalPolynomial) -> LocalPolynomial {
        &self * &rhs
    }
}

/// Gaussian moments by recursive pairing (Isserlis), memoized on the multi-index.
pub struct WickEvaluator {
    covariance: Vec<Vec<f64>>,
    memo: HashMap<Vec<u32>, f64>,
}

impl WickEvaluator {
    pub fn new(covariance: Vec<Vec<f64>>) -> Self {
        Self { covariance, memo: HashMap::new() }
    }

    /// Independent standard Gaussians on `n` sites.
    pub fn standard(n: usize) -> Self {
        let covariance = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        Self::new(covariance)
    }

    /// `E prod phi_i^{alpha_i}`.
    pub fn moment(&mut self, alpha: &[u32]) -> f64 {
        let total: u32 = alpha.iter().sum();
        if total == 0 {
            return 1.0;
        }
        if total % 2 == 1 {
            return 0.0;
        }
        if let Some(&v) = self.memo.get(alpha) {
            return v;
        }
        let first = alpha.iter().position(|&a| a > 0).expect("nonzero multi-index");
        let mut reduced = alpha.to_vec();
        reduced[first] -= 1;
        let mut acc = 0.0;
        for j in 0..reduced.len() {
            let c = self.covariance[first][j];
            if reduced[j] == 0 || c == 0.0 {
                continue;
            }
            let mult = reduced[j] as f64;
            let mut next = reduced.clone();
            next[j] -= 1;
            acc += mult * c * self.moment(&next);
        }
        self.memo.insert(alpha.to_vec(), acc);
        acc
    }

    pub fn expectation(&mut self, f: &LocalPolynomial) -> f64 {
        let n = self.covariance.len();
        let mut alpha = vec![0u32; n];
        let mut acc = 0.0;
        for (k, v) in f.terms() {
            alpha.iter_mut().for_each(|a| *a = 0);
            for &(s, p) in k {
                alpha[s] = p;
            }
            acc += v * self.moment(&alpha);
        }
        acc
    }
}

/// Ornstein-Uhlenbeck part `S f = sum_x (-d_x^2 f + phi_x d_x f)` on `Z_N`.
pub fn symmetric_part(f: &LocalPolynomial, n: usize) -> LocalPolynomial {
    let mut out = LocalPolynomial::zero();
    for x in 0..n {
        let d = f.derivative(x);
        if d.terms.is_empty() {
            continue;
        }
        out = &out - &d.derivative(x);
        out = &out + &(&LocalPolynomial::var(x) * &d);
    }
    out
}

/// Quadratic transport part `A f = sum_x (phi_{x+1} phi_x - phi_x phi_{x-1} + phi_{x+1}^2 - phi_{x-1}^2) d_x f`.
pub fn antisymmetric_part(f: &LocalPolynomial, n: usize) -> LocalPolynomial {
    let mut out = LocalPolynomial::zero();
    for x in 0..n {
        let d = f.derivative(x);
        if d.terms.is_empty() {
            continue;
        }
        let (l, r) = ((x + n - 1) % n, (x + 1) % n);
        let coeff = LocalPolynomial::term(1.0, &[(r, 1), (x, 1)])
            + LocalPolynomial::term(-1.0, &[(x, 1), (l, 1)])
            + LocalPolynomial::term(1.0, &[(r, 2)])
            + LocalPolynomial::term(-1.0, &[(l, 2)]);
        out = &out + &(&coeff * &d);
    }
    out
}

/// `L f = S f + A f` on the ring `Z_N`.
pub fn generator_apply(f: &LocalPolynomial, n: usize, max_degree: u32) -> Result<LocalPolynomial> {
    if f.degree() > max_degree {
        return Err(LabError::DegreeOverflow { degree: f.degree() as usize, max: max_degree as usize });
    }
    if n < 3 {
        return Err(LabError::invalid("N", "ring needs at least 3 sites"));
    }
    if f.max_site().is_some_and(|s| s >= n) {
        return Err(LabError::invalid("f", format!("support does not fit a ring of {n} sites")));
    }
    Ok(&symmetric_part(f, n) + &antisymmetric_part(f, n))
}

/// `int L f dmu` under the standard Gaussian product measure, evaluated exactly.
pub fn generator_pairing_exact(f: &LocalPolynomial, n: usize) -> Result<f64> {
    let lf = generator_apply(f, n, DEFAULT_MAX_DEGREE)?;
    Ok(WickEvaluator::standard(n).expectation(&lf))
}

/// A fixed library of local test polynomials of degree at most five.
pub fn polynomial_library() -> Vec<(String, LocalPolynomial)> {
    let t = LocalPolynomial::term;
    vec![
        ("phi0".into(), t(1.0, &[(0, 1)])),
        ("phi0^2".into(), t(1.0, &[(0, 2)])),
        ("phi0 phi1 + phi2^3".into(), t(1.0, &[(0, 1), (1, 1)]) + t(1.0, &[(2, 3)])),
        ("phi0^2 phi1".into(), t(1.0, &[(0, 2), (1, 1)])),
        ("phi0 phi1^2".into(), t(1.0, &[(0, 1), (1, 2)])),
        ("phi0^3 phi2".into(), t(1.0, &[(0, 3), (2, 1)])),
        ("phi0^4".into(), t(1.0, &[(0, 4)])),
        ("phi0 phi1 phi2 phi3".into(), t(1.0, &[(0, 1), (1, 1), (2, 1), (3, 1)])),
        ("phi0^2 phi1^2 - 3 phi1^3".into(), t(1.0, &[(0, 2), (1, 2)]) + t(-3.0, &[(1, 3)])),
        ("phi0^5".into(), t(1.0, &[(0, 5)])),
        ("phi0^3 phi1^2".into(), t(1.0, &[(0, 3), (1, 2)])),
        ("phi1 phi2^2 phi4^2 + 0.5 phi0".into(), t(1.0, &[(1, 1), (2, 2), (4, 2)]) + t(0.5, &[(0, 1)])),
        ("2 phi0 phi2 - phi1^4 phi3".into(), t(2.0, &[(0, 1), (2, 1)]) + t(-1.0, &[(1, 4), (3, 1)])),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gaussian_moments_are_double_factorials() {
        let mut w = WickEvaluator::standard(2);
        assert_eq!(w.moment(&[2, 0]), 1.0);
        assert_eq!(w.moment(&[4, 0]), 3.0);
        assert_eq!(w.moment(&[6, 2]), 15.0);
        assert_eq!(w.moment(&[3, 1]), 0.0);
    }

    #[test]
    fn correlated_moments_follow_isserlis() {
        let mut w = WickEvaluator::new(vec![vec![1.0, 0.5], vec![0.5, 2.0]]);
        // E[X^2 Y^2] = s11 s22 + 2 s12^2
        assert!((w.moment(&[2, 2]) - (2.0 + 0.5)).abs() < 1e-14);
        // E[X^3 Y] = 3 s11 s12
        assert!((w.moment(&[3, 1]) - 1.5).abs() < 1e-14);
    }

    #[test]
    fn derivative_and_product() {
        let p = LocalPolynomial::term(2.0, &[(0, 3), (1, 1)]);
        assert_eq!(p.derivative(0), LocalPolynomial::term(6.0, &[(0, 2), (1, 1)]));
        let sq = &p * &p;
        assert_eq!(sq, LocalPolynomial::term(4.0, &[(0, 6), (1, 2)]));
        assert_eq!((&p - &p).terms().count(), 0);
    }

    #[test]
    fn linear_observable_pairs_to_zero() {
        let v = generator_pairing_exact(&LocalPolynomial::var(0), 5).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn library_pairs_to_zero_on_all_rings() {
        for n in 5..=10 {
            for (name, f) in polynomial_library() {
                let v = generator_pairing_exact(&f, n).unwrap();
                assert!(v.abs() < 1e-10, "{name} on N={n}: {v}");
            }
        }
    }

    #[test]
    fn each_part_pairs_to_zero_separately() {
        let f = LocalPolynomial::term(1.0, &[(0, 2), (1, 1)]);
        let mut w = WickEvaluator::standard(6);
        assert!(w.expectation(&symmetric_part(&f, 6)).abs() < 1e-12);
        assert!(w.expectation(&antisymmetric_part(&f, 6)).abs() < 1e-12);
    }

    #[test]
    fn generator_matches_pointwise_formula() {
        let f = LocalPolynomial::term(1.0, &[(0, 2), (1, 1)]) + LocalPolynomial::term(-0.5, &[(2, 3)]);
        let lf = generator_apply(&f, 5, 6).unwrap();
        let phi = [0.3, -1.1, 0.7, 0.2, -0.4];
        // direct: sum_x [-d_xx f + phi_x d_x f + a_x d_x f]
        let n = 5usize;
        let mut direct = 0.0;
        for x in 0..n {
            let d = f.derivative(x);
            let (l, r) = ((x + n - 1) % n, (x + 1) % n);
            let a = phi[r] * phi[x] - phi[x] * phi[l] + phi[r] * phi[r] - phi[l] * phi[l];
            direct += -d.derivative(x).eval(&phi) + (phi[x] + a) * d.eval(&phi);
        }
        assert!((lf.eval(&phi) - direct).abs() < 1e-12);
    }

    #[test]
    fn degree_and_window_are_checked() {
        let f = LocalPolynomial::term(1.0, &[(0, 7)]);
        assert!(matches!(generator_pairing_exact(&f, 5), Err(LabError::DegreeOverflow { .. })));
        assert!(generator_pairing_exact(&LocalPolynomial::var(9), 5).is_err());
    }

    proptest! {
        #[test]
        fn random_polynomials_pair_to_zero(
            terms in prop::collection::vec((-2.0f64..2.0, prop::collection::vec((0usize..4, 1u32..3), 1..3)), 1..5),
            n in 5usize..9,
        ) {
            let mut f = LocalPolynomial::zero();
            for (c, factors) in &terms {
                f = &f + &LocalPolynomial::term(*c, factors);
            }
            prop_assume!(f.degree() <= 5);
            let v = generator_pairing_exact(&f, n).unwrap();
            prop_assert!(v.abs() < 1e-10);
        }
    }
}
