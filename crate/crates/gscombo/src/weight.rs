use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A Fleming-Harrington weight `w(s) = S(s-)^rho * (1 - S(s-))^gamma`
/// identifying one weighted log-rank test. `(0, 0)` is the standard
/// log-rank test; `(0, 1)` emphasizes late separation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub rho: f64,
    pub gamma: f64,
}

impl WeightSpec {
    pub fn new(rho: f64, gamma: f64) -> Result<Self> {
        if rho < 0.0 || gamma < 0.0 || !rho.is_finite() || !gamma.is_finite() {
            return Err(Error::Domain(format!(
                "Fleming-Harrington exponents must be nonnegative, got ({rho}, {gamma})"
            )));
        }
        Ok(Self { rho, gamma })
    }

    pub const fn log_rank() -> Self {
        Self { rho: 0.0, gamma: 0.0 }
    }

    pub const fn late_emphasis() -> Self {
        Self { rho: 0.0, gamma: 1.0 }
    }

    /// Weight value for a pooled survival probability.
    pub fn eval(&self, survival: f64) -> f64 {
        pow_or_one(survival, self.rho) * pow_or_one(1.0 - survival, self.gamma)
    }

    /// Squared weight expressed as summed exponents, the form shared by the
    /// variance of one test and the covariance of a pair.
    pub fn squared(&self) -> SummedWeight {
        SummedWeight { rho: 2.0 * self.rho, gamma: 2.0 * self.gamma }
    }

    /// Product of two weights, used for covariances.
    pub fn product(&self, other: &WeightSpec) -> SummedWeight {
        SummedWeight { rho: self.rho + other.rho, gamma: self.gamma + other.gamma }
    }
}

impl std::fmt::Display for WeightSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "G({},{})", self.rho, self.gamma)
    }
}

/// Exponent pair of a product of two Fleming-Harrington weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummedWeight {
    pub rho: f64,
    pub gamma: f64,
}

impl SummedWeight {
    pub fn eval(&self, survival: f64) -> f64 {
        pow_or_one(survival, self.rho) * pow_or_one(1.0 - survival, self.gamma)
    }
}

#[inline]
fn pow_or_one(base: f64, exp: f64) -> f64 {
    if exp == 0.0 {
        1.0
    } else {
        base.max(0.0).powf(exp)
    }
}
