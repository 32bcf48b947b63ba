use serde::{Deserialize, Serialize};

/// Outer test functions `F` applied to a scalar observable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OuterFunction {
    Constant { value: f64 },
    Identity,
    Square,
    Tanh,
    Sine,
    /// Probabilists' Hermite polynomial `x^3 - 3x`.
    Hermite3,
    /// `x^4 - 6x^2 + 3`.
    Hermite4,
}

impl OuterFunction {
    pub fn name(&self) -> String {
        match self {
            OuterFunction::Constant { value } => format!("const({value})"),
            OuterFunction::Identity => "x".into(),
            OuterFunction::Square => "x^2".into(),
            OuterFunction::Tanh => "tanh".into(),
            OuterFunction::Sine => "sin".into(),
            OuterFunction::Hermite3 => "H3".into(),
            OuterFunction::Hermite4 => "H4".into(),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            OuterFunction::Constant { value } => value,
            OuterFunction::Identity => x,
            OuterFunction::Square => x * x,
            OuterFunction::Tanh => x.tanh(),
            OuterFunction::Sine => x.sin(),
            OuterFunction::Hermite3 => x * x * x - 3.0 * x,
            OuterFunction::Hermite4 => x.powi(4) - 6.0 * x * x + 3.0,
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            OuterFunction::Constant { .. } => 0.0,
            OuterFunction::Identity => 1.0,
            OuterFunction::Square => 2.0 * x,
            OuterFunction::Tanh => 1.0 / x.cosh().powi(2),
            OuterFunction::Sine => x.cos(),
            OuterFunction::Hermite3 => 3.0 * x * x - 3.0,
            OuterFunction::Hermite4 => 4.0 * x * x * x - 12.0 * x,
        }
    }
}

impl std::str::FromStr for OuterFunction {
    type Err = String;

    /// Accepts `x`, `x^2`, `tanh`, `sin`, `H3`, `H4` (or their long names) and `const(c)`.
    fn from_str(s: &str) -> Result<Self, String> {
        let lower = s.trim().to_ascii_lowercase();
        Ok(match lower.as_str() {
            "x" | "identity" => OuterFunction::Identity,
            "x^2" | "square" => OuterFunction::Square,
            "tanh" => OuterFunction::Tanh,
            "sin" | "sine" => OuterFunction::Sine,
            "h3" | "hermite3" => OuterFunction::Hermite3,
            "h4" | "hermite4" => OuterFunction::Hermite4,
            other => {
                let inner = other.strip_prefix("const(").and_then(|r| r.strip_suffix(')'));
                match inner.map(str::parse::<f64>) {
                    Some(Ok(value)) => OuterFunction::Constant { value },
                    _ => return Err(format!("unknown outer function `{s}`")),
                }
            }
        })
    }
}

/// `F(y) = g(y / scale)` for a base function `g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledFunction {
    pub base: OuterFunction,
    pub scale: f64,
}

impl ScaledFunction {
    pub fn new(base: OuterFunction, scale: f64) -> Self {
        Self { base, scale }
    }

    pub fn unit(base: OuterFunction) -> Self {
        Self { base, scale: 1.0 }
    }

    pub fn value(&self, y: f64) -> f64 {
        self.base.value(y / self.scale)
    }

    pub fn derivative(&self, y: f64) -> f64 {
        self.base.derivative(y / self.scale) / self.scale
    }

    pub fn name(&self) -> String {
        if self.scale == 1.0 {
            self.base.name()
        } else {
            format!("{}(y/{:.4})", self.base.name(), self.scale)
        }
    }
}

/// A list of outer functions sharing a common argument scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FFamily {
    pub members: Vec<OuterFunction>,
    pub scale: f64,
}

impl FFamily {
    /// `{x, x^2, tanh, sin, H3, H4}` applied to `y / scale`.
    pub fn standard(scale: f64) -> Self {
        use OuterFunction::*;
        Self { members: vec![Identity, Square, Tanh, Sine, Hermite3, Hermite4], scale }
    }

    pub fn functions(&self) -> impl Iterator<Item = ScaledFunction> + '_ {
        self.members.iter().map(|&b| ScaledFunction::new(b, self.scale))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for f in FFamily::standard(1.0).members.into_iter().chain([OuterFunction::Constant { value: 2.5 }]) {
            assert_eq!(f.name().parse::<OuterFunction>().unwrap(), f);
        }
        assert!("cosh".parse::<OuterFunction>().is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for f in FFamily::standard(0.7).functions() {
            for y in [-1.3, -0.2, 0.0, 0.4, 2.1] {
                let h = 1e-6;
                let fd = (f.value(y + h) - f.value(y - h)) / (2.0 * h);
                assert!((fd - f.derivative(y)).abs() < 1e-6 * (1.0 + fd.abs()), "{}", f.name());
            }
        }
    }

    #[test]
    fn hermite_polynomials_are_orthogonal_to_low_degree() {
        // E[H_n(Z) Z^k] = 0 for k < n, via Gauss-Hermite-like quadrature on a wide grid
        let h = 1e-3;
        let m = |g: &dyn Fn(f64) -> f64| -> f64 {
            (-8000..=8000).map(|i| i as f64 * h).map(|z| g(z) * (-z * z / 2.0).exp()).sum::<f64>() * h
                / (2.0 * std::f64::consts::PI).sqrt()
        };
        for k in 0..3 {
            assert!(m(&|z| OuterFunction::Hermite3.value(z) * z.powi(k)).abs() < 1e-9);
            assert!(m(&|z| OuterFunction::Hermite4.value(z) * z.powi(k)).abs() < 1e-9);
        }
    }
}
