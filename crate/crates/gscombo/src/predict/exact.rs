//! Closed-form prediction for the two-piece exponential delayed-effect model.
//!
//! For a control arm `S0(s) = exp(-lambda s)` and a treatment arm whose
//! hazard drops from `lambda` to `theta*lambda` at the delay `eps`, the
//! accrual-weighted event integrals behind variances and covariances have
//! closed forms built from a pair of primitive integrals (`u`, `v`) and
//! their compositions (`h1`, `h0`, `h_tilde`). These treat the treatment
//! at-risk proportion as fixed at the assignment probability, which is what
//! distinguishes them from the marching predictor.

use crate::error::{Error, Result};
use crate::predict::stochastic::Hypothesis;
use crate::weight::WeightSpec;

/// Delayed-effect scenario parameters for closed-form prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactScenario {
    pub lambda: f64,
    pub theta: f64,
    pub eps: f64,
    pub accrual_duration: f64,
    pub assign_prob: f64,
}

impl ExactScenario {
    pub fn new(
        lambda: f64,
        theta: f64,
        eps: f64,
        accrual_duration: f64,
        assign_prob: f64,
    ) -> Result<Self> {
        if !(lambda > 0.0 && theta > 0.0 && eps >= 0.0 && accrual_duration > 0.0) {
            return Err(Error::Domain(format!(
                "invalid scenario: lambda={lambda}, theta={theta}, eps={eps}, R={accrual_duration}"
            )));
        }
        if !(assign_prob > 0.0 && assign_prob < 1.0) {
            return Err(Error::Domain(format!("assignment probability {assign_prob} outside (0,1)")));
        }
        Ok(Self { lambda, theta, eps, accrual_duration, assign_prob })
    }

    /// Continuity constant of the treatment survival at the delay,
    /// `c = exp(-(1-theta) * lambda * eps)`.
    pub fn continuity_constant(&self) -> f64 {
        (-(1.0 - self.theta) * self.lambda * self.eps).exp()
    }
}

/// `v(t, eps, k, lambda) = (1 - exp(-k lambda eps)) / k`, the branch of the
/// primitive integral where every x <= eps has full accrual weight.
pub fn util_v(eps: f64, k: f64, lambda: f64) -> Result<f64> {
    if k <= 0.0 {
        return Err(Error::Domain(format!("integral exponent k must be positive, got {k}")));
    }
    Ok((1.0 - (-k * lambda * eps).exp()) / k)
}

/// `u(t, eps, k, lambda)`: the branch where the accrual weight ramps.
pub fn util_u(t: f64, eps: f64, k: f64, lambda: f64, r: f64) -> Result<f64> {
    if k <= 0.0 {
        return Err(Error::Domain(format!("integral exponent k must be positive, got {k}")));
    }
    let tr = (t - r).max(0.0);
    let et = eps.min(t);
    let e_tr = (-k * lambda * tr).exp();
    let e_et = (-k * lambda * et).exp();
    Ok((1.0 - e_tr) / k + r.min(t) / (k * r) * e_tr - (t - eps).max(0.0) / (k * r) * e_et
        + (e_et - e_tr) / (k * k * r * lambda))
}

/// `integral_0^t min((t-x)/R, 1) exp(-k lambda x) lambda 1(x <= eps) dx`,
/// dispatching between the two closed-form branches.
pub fn util_uv(t: f64, eps: f64, k: f64, lambda: f64, r: f64) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::Domain(format!("time must be nonnegative, got {t}")));
    }
    if eps <= t - r {
        util_v(eps, k, lambda)
    } else {
        util_u(t, eps, k, lambda, r)
    }
}

/// `-integral_0^t min((t-x)/R,1) S1^k1 S0^k2 dS1`.
pub fn advanced_h1(t: f64, k1: f64, k2: f64, sc: &ExactScenario) -> Result<f64> {
    if k1 < 0.0 || k2 < 0.0 {
        return Err(Error::Domain(format!("survival powers must be nonnegative, got {k1}, {k2}")));
    }
    let c = sc.continuity_constant();
    let kk = sc.theta * (k1 + 1.0) + k2;
    let (l, r) = (sc.lambda, sc.accrual_duration);
    Ok(util_uv(t, sc.eps, k1 + k2 + 1.0, l, r)?
        + c.powf(k1 + 1.0)
            * sc.theta
            * (util_u(t, t, kk, l, r)? - util_uv(t, sc.eps, kk, l, r)?))
}

/// `-integral_0^t min((t-x)/R,1) S1^k1 S0^k2 dS0`.
pub fn advanced_h0(t: f64, k1: f64, k2: f64, sc: &ExactScenario) -> Result<f64> {
    if k1 < 0.0 || k2 < 0.0 {
        return Err(Error::Domain(format!("survival powers must be nonnegative, got {k1}, {k2}")));
    }
    let c = sc.continuity_constant();
    let kk = sc.theta * k1 + k2 + 1.0;
    let (l, r) = (sc.lambda, sc.accrual_duration);
    Ok(util_uv(t, sc.eps, k1 + k2 + 1.0, l, r)?
        + c.powf(k1) * (util_u(t, t, kk, l, r)? - util_uv(t, sc.eps, kk, l, r)?))
}

/// `-integral_0^t min((t-x)/R,1) S^k dS` for the pooled mixture `S`,
/// expanded binomially over the two arms.
pub fn advanced_h_tilde(t: f64, k: u32, sc: &ExactScenario) -> Result<f64> {
    let p = sc.assign_prob;
    let mut acc = 0.0;
    for i in 0..=k {
        let coef = binomial(k, i) * p.powi(i as i32) * (1.0 - p).powi((k - i) as i32);
        let (ki, kj) = (f64::from(i), f64::from(k - i));
        acc += coef * (p * advanced_h1(t, ki, kj, sc)? + (1.0 - p) * advanced_h0(t, ki, kj, sc)?);
    }
    Ok(acc)
}

/// The accrual-weighted event integral with integer survival powers:
/// `integral_0^t min((t-x)/R,1) S^r (1-S)^g f dx`, where `S`/`f` are the
/// control law under the null and the pooled mixture under the alternative.
pub fn weighted_event_integral(
    hypothesis: Hypothesis,
    r_pow: u32,
    g_pow: u32,
    t: f64,
    sc: &ExactScenario,
) -> Result<f64> {
    let mut acc = 0.0;
    for i in 0..=g_pow {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        let coef = sign * binomial(g_pow, i);
        let term = match hypothesis {
            Hypothesis::Null => util_u(
                t,
                t,
                f64::from(r_pow + i + 1),
                sc.lambda,
                sc.accrual_duration,
            )?,
            Hypothesis::Alternative => advanced_h_tilde(t, r_pow + i, sc)?,
        };
        acc += coef * term;
    }
    Ok(acc)
}

/// Expected observed-event fraction per randomized subject by time `t`.
pub fn exact_event_fraction(hypothesis: Hypothesis, t: f64, sc: &ExactScenario) -> Result<f64> {
    weighted_event_integral(hypothesis, 0, 0, t, sc)
}

fn integer_power(x: f64, what: &str) -> Result<u32> {
    let rounded = x.round();
    if (x - rounded).abs() < 1e-9 && rounded >= 0.0 {
        Ok(rounded as u32)
    } else {
        Err(Error::Domain(format!("{what} must resolve to a nonnegative integer, got {x}")))
    }
}

/// Closed-form variance of one statistic numerator for a trial of `n`
/// subjects. Requires `2*rho` and `2*gamma` to be integers.
pub fn exact_variance(
    hypothesis: Hypothesis,
    weight: WeightSpec,
    t: f64,
    sc: &ExactScenario,
    n: f64,
) -> Result<f64> {
    let sq = weight.squared();
    let (r_pow, g_pow) = match (integer_power(sq.rho, "2*rho"), integer_power(sq.gamma, "2*gamma")) {
        (Ok(r), Ok(g)) => (r, g),
        _ => return Err(Error::UnsupportedWeight { rho: weight.rho, gamma: weight.gamma }),
    };
    let p = sc.assign_prob;
    Ok(n * p * (1.0 - p) * weighted_event_integral(hypothesis, r_pow, g_pow, t, sc)?)
}

/// Closed-form covariance of two statistic numerators, using the
/// summed-exponent weight rule. Requires integer exponent sums.
pub fn exact_covariance(
    w1: WeightSpec,
    w2: WeightSpec,
    t: f64,
    hypothesis: Hypothesis,
    sc: &ExactScenario,
    n: f64,
) -> Result<f64> {
    let prod = w1.product(&w2);
    let (r_pow, g_pow) =
        match (integer_power(prod.rho, "rho1+rho2"), integer_power(prod.gamma, "gamma1+gamma2")) {
            (Ok(r), Ok(g)) => (r, g),
            _ => {
                return Err(Error::UnsupportedWeight {
                    rho: prod.rho,
                    gamma: prod.gamma,
                })
            }
        };
    let p = sc.assign_prob;
    Ok(n * p * (1.0 - p) * weighted_event_integral(hypothesis, r_pow, g_pow, t, sc)?)
}

fn binomial(n: u32, k: u32) -> f64 {
    let k = k.min(n - k.min(n));
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * f64::from(n - i) / f64::from(i + 1);
    }
    acc
}
