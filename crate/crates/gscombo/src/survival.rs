//! Piecewise-exponential event-time laws for two-arm trials.
//!
//! A law is a set of hazard pieces over `[0, e_1), [e_1, e_2), ..., [e_{Q-1}, inf)`.
//! Survival follows `S(s) = exp(-sum_q lambda_q * max(0, min(e_q - e_{q-1}, s - e_{q-1})))`,
//! the density is `f(s) = S(s) * lambda(s)` with the right-continuous hazard,
//! and the delayed-effect special case has a single hazard change on the
//! treatment arm at the delay time.

use crate::error::{Error, Result};

/// An event-time law with piecewise-constant hazard.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseExponential {
    /// Interior change points, strictly increasing, all positive. The first
    /// boundary is implicitly 0 and the last interval extends to infinity.
    change_points: Vec<f64>,
    /// One hazard per interval; `hazards.len() == change_points.len() + 1`.
    hazards: Vec<f64>,
}

impl PiecewiseExponential {
    pub fn new(change_points: Vec<f64>, hazards: Vec<f64>) -> Result<Self> {
        if hazards.len() != change_points.len() + 1 {
            return Err(Error::Domain(format!(
                "need one hazard per interval: {} change points require {} hazards, got {}",
                change_points.len(),
                change_points.len() + 1,
                hazards.len()
            )));
        }
        let mut prev = 0.0;
        for &e in &change_points {
            if !(e > prev) || !e.is_finite() {
                return Err(Error::Domain(format!(
                    "change points must be strictly increasing and positive, got {e} after {prev}"
                )));
            }
            prev = e;
        }
        for &h in &hazards {
            if !(h > 0.0) || !h.is_finite() {
                return Err(Error::Domain(format!("hazards must be positive and finite, got {h}")));
            }
        }
        Ok(Self { change_points, hazards })
    }

    /// Single-piece exponential law.
    pub fn exponential(rate: f64) -> Result<Self> {
        Self::new(Vec::new(), vec![rate])
    }

    pub fn change_points(&self) -> &[f64] {
        &self.change_points
    }

    pub fn hazards(&self) -> &[f64] {
        &self.hazards
    }

    pub fn pieces(&self) -> usize {
        self.hazards.len()
    }

    /// Right-continuous hazard at follow-up time `s`.
    pub fn hazard(&self, s: f64) -> f64 {
        let idx = self.change_points.partition_point(|&e| e <= s);
        self.hazards[idx]
    }

    /// Cumulative hazard at `s`.
    pub fn cumulative_hazard(&self, s: f64) -> f64 {
        let mut acc = 0.0;
        let mut lo = 0.0;
        for (q, &h) in self.hazards.iter().enumerate() {
            let hi = self.change_points.get(q).copied().unwrap_or(f64::INFINITY);
            acc += h * (s.min(hi) - lo).max(0.0);
            if s <= hi {
                break;
            }
            lo = hi;
        }
        acc
    }

    /// Survival probability at `s`.
    pub fn survival(&self, s: f64) -> Result<f64> {
        if s < 0.0 {
            return Err(Error::Domain(format!("negative time {s}")));
        }
        Ok((-self.cumulative_hazard(s)).exp())
    }

    /// Density at `s`, with the right-continuous hazard at change points.
    pub fn density(&self, s: f64) -> Result<f64> {
        Ok(self.survival(s)? * self.hazard(s))
    }

    /// Event time with survival value `u`, the inverse of `survival`.
    /// Used for inverse-CDF sampling: feed a Uniform(0,1] draw.
    pub fn inverse_survival(&self, u: f64) -> f64 {
        debug_assert!(u > 0.0 && u <= 1.0);
        let target = -u.ln();
        let mut acc = 0.0;
        let mut lo = 0.0;
        for (q, &h) in self.hazards.iter().enumerate() {
            let hi = self.change_points.get(q).copied().unwrap_or(f64::INFINITY);
            let seg = h * (hi - lo);
            if acc + seg >= target || hi.is_infinite() {
                return lo + (target - acc) / h;
            }
            acc += seg;
            lo = hi;
        }
        unreachable!("last interval is unbounded");
    }

    /// The same law on a refined grid that adds `points` as (no-op) change
    /// points. Hazard values are unchanged.
    fn refined(&self, points: &[f64]) -> Self {
        let mut grid: Vec<f64> = self
            .change_points
            .iter()
            .chain(points.iter())
            .copied()
            .filter(|&e| e > 0.0 && e.is_finite())
            .collect();
        grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        grid.dedup();
        let hazards = std::iter::once(0.0)
            .chain(grid.iter().copied())
            .map(|left| self.hazard(left))
            .collect();
        Self { change_points: grid, hazards }
    }
}

/// Control and treatment laws on a shared change-point grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoArmModel {
    control: PiecewiseExponential,
    treatment: PiecewiseExponential,
    assign_prob: f64,
}

impl TwoArmModel {
    /// Pads both laws to the union of their change points so the per-interval
    /// hazard ratio is defined everywhere.
    pub fn new(
        control: PiecewiseExponential,
        treatment: PiecewiseExponential,
        assign_prob: f64,
    ) -> Result<Self> {
        if !(assign_prob > 0.0 && assign_prob < 1.0) {
            return Err(Error::Domain(format!(
                "assignment probability must lie in (0,1), got {assign_prob}"
            )));
        }
        let c = control.refined(treatment.change_points());
        let t = treatment.refined(control.change_points());
        debug_assert_eq!(c.change_points, t.change_points);
        Ok(Self { control: c, treatment: t, assign_prob })
    }

    /// The delayed-effect special case: control exponential with hazard
    /// `rate`; treatment hazard equals `rate` before the delay `eps` and
    /// `ratio * rate` afterwards.
    pub fn two_piece(rate: f64, ratio: f64, eps: f64, assign_prob: f64) -> Result<Self> {
        if !(rate > 0.0) {
            return Err(Error::Domain(format!("rate must be positive, got {rate}")));
        }
        if !(ratio > 0.0) {
            return Err(Error::Domain(format!("hazard ratio must be positive, got {ratio}")));
        }
        if eps < 0.0 {
            return Err(Error::Domain(format!("delay must be nonnegative, got {eps}")));
        }
        let control = PiecewiseExponential::exponential(rate)?;
        let treatment = if eps == 0.0 || ratio == 1.0 {
            PiecewiseExponential::exponential(if eps == 0.0 { ratio * rate } else { rate })?
        } else {
            PiecewiseExponential::new(vec![eps], vec![rate, ratio * rate])?
        };
        Self::new(control, treatment, assign_prob)
    }

    pub fn control(&self) -> &PiecewiseExponential {
        &self.control
    }

    pub fn treatment(&self) -> &PiecewiseExponential {
        &self.treatment
    }

    pub fn assign_prob(&self) -> f64 {
        self.assign_prob
    }

    /// Per-interval hazard ratios on the common grid.
    pub fn hazard_ratios(&self) -> Vec<f64> {
        self.treatment
            .hazards
            .iter()
            .zip(&self.control.hazards)
            .map(|(t, c)| t / c)
            .collect()
    }

    /// The same model with treatment hazards replaced by control hazards
    /// (all hazard ratios set to one).
    pub fn null(&self) -> Self {
        Self {
            control: self.control.clone(),
            treatment: self.control.clone(),
            assign_prob: self.assign_prob,
        }
    }

    /// Mixture survival of the two arms.
    pub fn pooled_survival(&self, s: f64) -> Result<f64> {
        let p = self.assign_prob;
        Ok((1.0 - p) * self.control.survival(s)? + p * self.treatment.survival(s)?)
    }

    /// Mixture density of the two arms.
    pub fn pooled_density(&self, s: f64) -> Result<f64> {
        let p = self.assign_prob;
        Ok((1.0 - p) * self.control.density(s)? + p * self.treatment.density(s)?)
    }
}

/// Subject entry profile over the accrual window.
#[derive(Debug, Clone, PartialEq)]
pub enum AccrualProfile {
    Uniform,
    /// One relative rate per unit-length slice of `[0, R]`; normalized on
    /// construction of [`AccrualCensoring`].
    Piecewise(Vec<f64>),
}

/// Accrual window, study end, entry profile and per-arm dropout rates.
#[derive(Debug, Clone, PartialEq)]
pub struct AccrualCensoring {
    accrual_duration: f64,
    study_end: f64,
    profile: AccrualProfile,
    /// Exponential censoring rates per month, `[control, treatment]`,
    /// in addition to administrative censoring at the analysis time.
    censor_rates: [f64; 2],
}

impl AccrualCensoring {
    pub fn new(
        accrual_duration: f64,
        study_end: f64,
        profile: AccrualProfile,
        censor_rates: [f64; 2],
    ) -> Result<Self> {
        if !(accrual_duration > 0.0 && accrual_duration <= study_end) {
            return Err(Error::Domain(format!(
                "need 0 < accrual duration <= study end, got {accrual_duration} and {study_end}"
            )));
        }
        if censor_rates.iter().any(|&r| r < 0.0 || !r.is_finite()) {
            return Err(Error::Domain(format!("censor rates must be nonnegative, got {censor_rates:?}")));
        }
        let profile = match profile {
            AccrualProfile::Uniform => AccrualProfile::Uniform,
            AccrualProfile::Piecewise(rates) => {
                if rates.is_empty() || rates.iter().any(|&r| r < 0.0) {
                    return Err(Error::Domain("piecewise accrual rates must be nonnegative and nonempty".into()));
                }
                let slices = rates.len() as f64;
                if slices < accrual_duration {
                    return Err(Error::Domain(format!(
                        "accrual rate list covers {slices} months but accrual lasts {accrual_duration}"
                    )));
                }
                // normalize so the profile integrates to one over [0, R]
                let mut mass = 0.0;
                for (k, &r) in rates.iter().enumerate() {
                    let len = (accrual_duration - k as f64).clamp(0.0, 1.0);
                    mass += r * len;
                }
                if mass <= 0.0 {
                    return Err(Error::Domain("accrual profile has zero total mass".into()));
                }
                AccrualProfile::Piecewise(rates.iter().map(|r| r / mass).collect())
            }
        };
        Ok(Self { accrual_duration, study_end, profile, censor_rates })
    }

    /// Uniform accrual, administrative censoring only.
    pub fn uniform(accrual_duration: f64, study_end: f64) -> Result<Self> {
        Self::new(accrual_duration, study_end, AccrualProfile::Uniform, [0.0, 0.0])
    }

    pub fn accrual_duration(&self) -> f64 {
        self.accrual_duration
    }

    pub fn study_end(&self) -> f64 {
        self.study_end
    }

    pub fn profile(&self) -> &AccrualProfile {
        &self.profile
    }

    pub fn censor_rate(&self, arm: u8) -> f64 {
        self.censor_rates[arm as usize]
    }

    pub fn has_random_censoring(&self) -> bool {
        self.censor_rates.iter().any(|&r| r > 0.0)
    }

    /// Fraction of the total cohort enrolled by calendar time `e`.
    pub fn accrual_cdf(&self, e: f64) -> f64 {
        if e <= 0.0 {
            return 0.0;
        }
        if e >= self.accrual_duration {
            return 1.0;
        }
        match &self.profile {
            AccrualProfile::Uniform => e / self.accrual_duration,
            AccrualProfile::Piecewise(rates) => {
                let mut acc = 0.0;
                for (k, &r) in rates.iter().enumerate() {
                    let lo = k as f64;
                    let len = (e.min(self.accrual_duration) - lo).clamp(0.0, 1.0);
                    acc += r * len;
                    if e < lo + 1.0 {
                        break;
                    }
                }
                acc
            }
        }
    }

    /// Entry density at calendar time `e`.
    pub fn accrual_pdf(&self, e: f64) -> f64 {
        if e < 0.0 || e >= self.accrual_duration {
            return 0.0;
        }
        match &self.profile {
            AccrualProfile::Uniform => 1.0 / self.accrual_duration,
            AccrualProfile::Piecewise(rates) => rates[(e.floor() as usize).min(rates.len() - 1)],
        }
    }

    /// Entry time with `accrual_cdf(e) = u`, for inverse-CDF sampling.
    pub fn inverse_accrual_cdf(&self, u: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&u));
        match &self.profile {
            AccrualProfile::Uniform => u * self.accrual_duration,
            AccrualProfile::Piecewise(rates) => {
                let mut acc = 0.0;
                for (k, &r) in rates.iter().enumerate() {
                    let lo = k as f64;
                    let len = (self.accrual_duration - lo).clamp(0.0, 1.0);
                    let seg = r * len;
                    if acc + seg >= u && r > 0.0 {
                        return lo + (u - acc) / r;
                    }
                    acc += seg;
                }
                self.accrual_duration
            }
        }
    }
}

/// Monthly exponential censoring rate matching a yearly dropout proportion.
pub fn yearly_censor_proportion_to_rate(proportion: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&proportion) {
        return Err(Error::Domain(format!(
            "yearly censoring proportion must lie in [0,1), got {proportion}"
        )));
    }
    Ok(-(1.0 - proportion).ln() / 12.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn lam() -> f64 {
        2f64.ln() / 6.0
    }

    #[test]
    fn survival_single_piece_median() {
        let m = PiecewiseExponential::exponential(lam()).unwrap();
        assert_relative_eq!(m.survival(6.0).unwrap(), 0.5, epsilon = 1e-14);
        assert_relative_eq!(m.survival(0.0).unwrap(), 1.0);
    }

    #[test]
    fn survival_two_piece_closed_form() {
        // S1(8) = exp(-lam*2 - 0.6*lam*6) = 2^(-2/6) * 2^(-3.6/6)
        let m = TwoArmModel::two_piece(lam(), 0.6, 2.0, 0.5).unwrap();
        let want = 2f64.powf(-2.0 / 6.0) * 2f64.powf(-3.6 / 6.0);
        assert_relative_eq!(m.treatment().survival(8.0).unwrap(), want, epsilon = 1e-14);
        // continuity constant c = exp(-(1-theta)*lam*eps)
        let c = (-(1.0 - 0.6) * lam() * 2.0).exp();
        assert_relative_eq!(
            m.treatment().survival(8.0).unwrap(),
            c * (-0.6 * lam() * 8.0).exp(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn survival_rejects_negative_time() {
        let m = PiecewiseExponential::exponential(1.0).unwrap();
        assert!(matches!(m.survival(-0.5), Err(Error::Domain(_))));
        assert!(matches!(m.density(-0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn density_at_origin_and_post_delay() {
        let m = PiecewiseExponential::exponential(lam()).unwrap();
        assert_relative_eq!(m.density(0.0).unwrap(), lam());
        // two-piece: f1(s) = theta*lam*S1(s) past the delay
        let two = TwoArmModel::two_piece(lam(), 0.6, 2.0, 0.5).unwrap();
        let s = 5.0;
        assert_relative_eq!(
            two.treatment().density(s).unwrap(),
            0.6 * lam() * two.treatment().survival(s).unwrap(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn density_matches_negative_survival_slope() {
        let two = TwoArmModel::two_piece(lam(), 0.6, 2.0, 0.5).unwrap();
        let h = 1e-5;
        for &s in &[0.5, 1.9, 2.5, 7.0, 13.0] {
            let slope = (two.treatment().survival(s - h).unwrap()
                - two.treatment().survival(s + h).unwrap())
                / (2.0 * h);
            assert_relative_eq!(two.treatment().density(s).unwrap(), slope, epsilon = 1e-6);
        }
    }

    #[test]
    fn two_piece_null_reduction_matches_control() {
        let m = TwoArmModel::two_piece(lam(), 1.0, 2.0, 0.5).unwrap();
        let mut x = 0.7_f64;
        for _ in 0..50 {
            x = (x * 997.0).fract();
            let s = 30.0 * x;
            assert_relative_eq!(
                m.treatment().survival(s).unwrap(),
                m.control().survival(s).unwrap(),
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn two_piece_zero_delay_is_proportional_hazards() {
        let m = TwoArmModel::two_piece(lam(), 0.6, 0.0, 0.5).unwrap();
        let s = 4.0;
        assert_relative_eq!(
            m.treatment().survival(s).unwrap(),
            (-0.6 * lam() * s).exp(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn two_piece_continuous_at_change_point() {
        let m = TwoArmModel::two_piece(lam(), 0.6, 2.0, 0.5).unwrap();
        assert_relative_eq!(
            m.treatment().survival(2.0).unwrap(),
            m.control().survival(2.0).unwrap(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn two_piece_rejects_bad_parameters() {
        assert!(TwoArmModel::two_piece(0.0, 0.6, 2.0, 0.5).is_err());
        assert!(TwoArmModel::two_piece(lam(), -0.1, 2.0, 0.5).is_err());
        assert!(TwoArmModel::two_piece(lam(), 0.6, 2.0, 1.0).is_err());
    }

    #[test]
    fn pooled_survival_mixture() {
        let m = TwoArmModel::two_piece(lam(), 0.6, 2.0, 0.5).unwrap();
        assert_relative_eq!(m.pooled_survival(0.0).unwrap(), 1.0);
        let s = 8.0;
        let want = 0.5 * m.control().survival(s).unwrap() + 0.5 * m.treatment().survival(s).unwrap();
        assert_relative_eq!(m.pooled_survival(s).unwrap(), want, epsilon = 1e-14);
        let null = TwoArmModel::two_piece(lam(), 1.0, 2.0, 0.5).unwrap();
        assert_relative_eq!(
            null.pooled_survival(s).unwrap(),
            null.control().survival(s).unwrap(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn log_survival_piecewise_linear() {
        let m = PiecewiseExponential::new(vec![2.0, 5.0], vec![0.1, 0.25, 0.05]).unwrap();
        // slope of log-survival inside each interval equals minus the hazard
        for &(a, b, h) in &[(0.2, 1.8, 0.1), (2.2, 4.8, 0.25), (5.5, 20.0, 0.05)] {
            let slope =
                (m.survival(b).unwrap().ln() - m.survival(a).unwrap().ln()) / (b - a);
            assert_relative_eq!(slope, -h, epsilon = 1e-12);
        }
    }

    #[test]
    fn density_integrates_to_one_minus_survival() {
        let m = PiecewiseExponential::new(vec![2.0, 5.0], vec![0.1, 0.25, 0.05]).unwrap();
        // Simpson quadrature piece by piece, each with its own hazard so the
        // jumps of the density sit on segment boundaries
        let mut acc = 0.0;
        for &(a, b, haz) in &[(0.0, 2.0, 0.1), (2.0, 5.0, 0.25), (5.0, 120.0, 0.05)] {
            let n = 20_000;
            let h = (b - a) / n as f64;
            let f = |x: f64| m.survival(x).unwrap() * haz;
            let mut seg = f(a) + f(b);
            for i in 1..n {
                seg += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
            }
            acc += seg * h / 3.0;
        }
        assert_relative_eq!(acc + m.survival(120.0).unwrap(), 1.0, epsilon = 1e-8);
    }

    #[test]
    fn inverse_survival_round_trip() {
        let m = PiecewiseExponential::new(vec![2.0, 5.0], vec![0.1, 0.25, 0.05]).unwrap();
        for &u in &[1.0, 0.9, 0.5, 0.2, 0.01] {
            let t = m.inverse_survival(u);
            assert_relative_eq!(m.survival(t).unwrap(), u, epsilon = 1e-12);
        }
    }

    #[test]
    fn staircase_accrual_normalizes_and_inverts() {
        let rates = vec![1.0, 2.0, 3.0, 4.0, 6.0, 6.0, 6.0, 6.0, 6.0, 6.0, 6.0, 6.0, 6.0, 6.0];
        let ac = AccrualCensoring::new(14.0, 18.0, AccrualProfile::Piecewise(rates), [0.0, 0.0])
            .unwrap();
        assert_relative_eq!(ac.accrual_cdf(14.0), 1.0, epsilon = 1e-12);
        assert_relative_eq!(ac.accrual_cdf(4.0), 10.0 / 70.0, epsilon = 1e-12);
        for &u in &[0.0, 0.05, 0.143, 0.5, 0.99, 1.0] {
            let e = ac.inverse_accrual_cdf(u);
            assert_relative_eq!(ac.accrual_cdf(e), u, epsilon = 1e-10);
        }
    }

    #[test]
    fn yearly_censor_conversion() {
        let r = yearly_censor_proportion_to_rate(0.2).unwrap();
        // twelve months at this rate censor 20% of subjects
        assert_relative_eq!(1.0 - (-12.0 * r).exp(), 0.2, epsilon = 1e-12);
        assert!(yearly_censor_proportion_to_rate(1.0).is_err());
    }
}
