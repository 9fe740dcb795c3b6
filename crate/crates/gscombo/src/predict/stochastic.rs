//! Discretized marching predictor for weighted log-rank statistics.
//!
//! The month is cut into `b` equal slices. Per slice the scheme tracks the
//! per-arm at-risk proportions, depleting them by the event hazard, by the
//! staggered-entry (administrative) censoring induced by the analysis time,
//! and by any random dropout. The expected event increment of a slice,
//! multiplied by the enrolled fraction at the analysis time, approximates
//! the probability that one randomized subject contributes an observed
//! event in that slice. Means, variances and covariances of statistic
//! numerators are slice sums over these increments; everything is on a
//! per-subject scale (multiply by `n` for a trial of `n` subjects).

use crate::error::{Error, Result};
use crate::survival::{AccrualCensoring, TwoArmModel};
use crate::weight::{SummedWeight, WeightSpec};

/// Which hypothesis the prediction is made under. The null replaces the
/// treatment law by the control law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Hypothesis {
    Null,
    Alternative,
}

/// Per-slice state of the marching scheme over `[0, t)`.
#[derive(Debug, Clone)]
pub struct PredictionGrid {
    /// Slices per month.
    pub b: u32,
    /// Analysis (stopping) time the grid was built for.
    pub t: f64,
    /// Weight the `weights` array was evaluated at.
    pub weight: WeightSpec,
    /// Control-arm at-risk proportion at the left endpoint of each slice.
    pub at_risk_control: Vec<f64>,
    /// Treatment-arm at-risk proportion at the left endpoint of each slice.
    pub at_risk_treatment: Vec<f64>,
    /// Control hazard at the left endpoint.
    pub hazard_control: Vec<f64>,
    /// Treatment hazard at the left endpoint.
    pub hazard_treatment: Vec<f64>,
    /// Pooled model survival at the left endpoint.
    pub pooled_survival: Vec<f64>,
    /// Weight values `w(S(s_j))`.
    pub weights: Vec<f64>,
    /// Expected observed-event increments per randomized subject.
    pub event_increments: Vec<f64>,
    /// Allocation odds `at_risk_treatment / at_risk_control`.
    pub allocation_odds: Vec<f64>,
    /// Hazard ratios `hazard_treatment / hazard_control`.
    pub hazard_ratios: Vec<f64>,
}

/// Builds the prediction grid for an analysis at calendar time `t`.
///
/// Under [`Hypothesis::Null`] the treatment arm uses control hazards. The
/// staggered-entry depletion uses the entry-profile hazard at calendar time
/// `t - s`, which reduces to `1/(t - s)` for uniform accrual once `s > t - R`,
/// and the enrolled fraction multiplies every event increment (for uniform
/// accrual: `min(t/R, 1)`).
pub fn march(
    model: &TwoArmModel,
    ac: &AccrualCensoring,
    hypothesis: Hypothesis,
    t: f64,
    b: u32,
    weight: WeightSpec,
) -> Result<PredictionGrid> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("analysis time must be positive, got {t}")));
    }
    if b == 0 {
        return Err(Error::Domain("grid resolution b must be at least 1".into()));
    }
    let work = match hypothesis {
        Hypothesis::Null => model.null(),
        Hypothesis::Alternative => model.clone(),
    };
    let p = work.assign_prob();
    let bf = f64::from(b);
    let slices = (bf * t).floor() as usize;
    let enrolled = ac.accrual_cdf(t);
    let censor = [ac.censor_rate(0), ac.censor_rate(1)];

    let mut grid = PredictionGrid {
        b,
        t,
        weight,
        at_risk_control: Vec::with_capacity(slices),
        at_risk_treatment: Vec::with_capacity(slices),
        hazard_control: Vec::with_capacity(slices),
        hazard_treatment: Vec::with_capacity(slices),
        pooled_survival: Vec::with_capacity(slices),
        weights: Vec::with_capacity(slices),
        event_increments: Vec::with_capacity(slices),
        allocation_odds: Vec::with_capacity(slices),
        hazard_ratios: Vec::with_capacity(slices),
    };

    let mut r0 = 1.0 - p;
    let mut r1 = p;
    for j in 0..slices {
        let s = j as f64 / bf;
        let h0 = work.control().hazard(s);
        let h1 = work.treatment().hazard(s);
        let pooled = work.pooled_survival(s)?;

        grid.at_risk_control.push(r0);
        grid.at_risk_treatment.push(r1);
        grid.hazard_control.push(h0);
        grid.hazard_treatment.push(h1);
        grid.pooled_survival.push(pooled);
        grid.weights.push(weight.eval(pooled));
        grid.allocation_odds.push(if r0 > 0.0 { r1 / r0 } else { 1.0 });
        grid.hazard_ratios.push(h1 / h0);
        grid.event_increments.push((h0 * r0 + h1 * r1) / bf * enrolled);

        // staggered-entry depletion: entry hazard of the cohort still at
        // risk of enrollment-censoring at follow-up s, analysis time t
        let cutoff = t - s;
        let cdf = ac.accrual_cdf(cutoff);
        let adm = if cdf > 0.0 { ac.accrual_pdf(cutoff) / cdf } else { f64::INFINITY };
        r0 = (r0 * (1.0 - (h0 + adm + censor[0]) / bf)).max(0.0);
        r1 = (r1 * (1.0 - (h1 + adm + censor[1]) / bf)).max(0.0);
    }
    Ok(grid)
}

impl PredictionGrid {
    pub fn len(&self) -> usize {
        self.event_increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.event_increments.is_empty()
    }

    /// Covariance-style slice sum with an arbitrary product weight.
    fn weighted_information(&self, w: SummedWeight) -> f64 {
        let mut acc = 0.0;
        for j in 0..self.len() {
            let phi = self.allocation_odds[j];
            acc += self.event_increments[j] * w.eval(self.pooled_survival[j]) * phi
                / ((1.0 + phi) * (1.0 + phi));
        }
        acc
    }
}

/// Predicted mean of the statistic numerator, per subject.
pub fn predict_mean(grid: &PredictionGrid) -> f64 {
    let mut acc = 0.0;
    for j in 0..grid.len() {
        let phi = grid.allocation_odds[j];
        let theta = grid.hazard_ratios[j];
        acc += grid.event_increments[j]
            * grid.weights[j]
            * (phi * theta / (1.0 + phi * theta) - phi / (1.0 + phi));
    }
    acc
}

/// Predicted variance of the statistic numerator, per subject.
pub fn predict_variance(grid: &PredictionGrid) -> f64 {
    grid.weighted_information(grid.weight.squared())
}

/// Predicted covariance of two statistic numerators on a shared grid,
/// using the summed-exponent weight rule.
pub fn predict_covariance(grid: &PredictionGrid, w1: WeightSpec, w2: WeightSpec) -> f64 {
    grid.weighted_information(w1.product(&w2))
}

/// Expected fraction of randomized subjects with an observed event by `t`.
pub fn expected_event_fraction(grid: &PredictionGrid) -> f64 {
    grid.event_increments.iter().sum()
}

/// Standardized drift `mean / sqrt(variance)` of one test at one time.
/// Negative when the treatment is beneficial.
pub fn predict_mu(
    model: &TwoArmModel,
    ac: &AccrualCensoring,
    hypothesis: Hypothesis,
    t: f64,
    b: u32,
    weight: WeightSpec,
) -> Result<f64> {
    let grid = march(model, ac, hypothesis, t, b, weight)?;
    let var = predict_variance(&grid);
    if var <= 0.0 {
        return Err(Error::Degenerate(format!(
            "predicted variance is zero at t={t}; too little information to standardize"
        )));
    }
    Ok(predict_mean(&grid) / var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn lam() -> f64 {
        2f64.ln() / 6.0
    }

    fn default_model(theta: f64) -> TwoArmModel {
        TwoArmModel::two_piece(lam(), theta, 2.0, 0.5).unwrap()
    }

    fn default_ac() -> AccrualCensoring {
        AccrualCensoring::uniform(14.0, 18.0).unwrap()
    }

    #[test]
    fn null_grid_has_unit_hazard_ratios() {
        let grid = march(
            &default_model(0.7),
            &default_ac(),
            Hypothesis::Null,
            18.0,
            30,
            WeightSpec::log_rank(),
        )
        .unwrap();
        assert!(grid.hazard_ratios.iter().all(|&r| r == 1.0));
    }

    #[test]
    fn event_fraction_matches_reported_ratio() {
        // d/n = 597/927 = 0.6440 for the delayed-effect benchmark
        let grid = march(
            &default_model(0.7),
            &default_ac(),
            Hypothesis::Alternative,
            18.0,
            30,
            WeightSpec::log_rank(),
        )
        .unwrap();
        let d = expected_event_fraction(&grid);
        assert!((d - 0.6440).abs() < 0.002, "event fraction {d}");
    }

    #[test]
    fn at_risk_monotone_non_increasing() {
        let grid = march(
            &default_model(0.6),
            &default_ac(),
            Hypothesis::Alternative,
            18.0,
            30,
            WeightSpec::late_emphasis(),
        )
        .unwrap();
        for w in grid.at_risk_control.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
        for w in grid.at_risk_treatment.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
    }

    #[test]
    fn mean_is_zero_under_null() {
        for weight in [WeightSpec::log_rank(), WeightSpec::late_emphasis()] {
            for t in [5.0, 12.0, 18.0] {
                let grid =
                    march(&default_model(0.6), &default_ac(), Hypothesis::Null, t, 30, weight)
                        .unwrap();
                assert_eq!(predict_mean(&grid), 0.0);
            }
        }
    }

    #[test]
    fn mean_is_negative_under_alternative_late_weight() {
        let grid = march(
            &default_model(0.6),
            &default_ac(),
            Hypothesis::Alternative,
            18.0,
            30,
            WeightSpec::late_emphasis(),
        )
        .unwrap();
        assert!(predict_mean(&grid) < 0.0);
    }

    #[test]
    fn mean_stable_under_grid_refinement() {
        let coarse = march(
            &default_model(0.6),
            &default_ac(),
            Hypothesis::Alternative,
            18.0,
            30,
            WeightSpec::late_emphasis(),
        )
        .unwrap();
        let fine = march(
            &default_model(0.6),
            &default_ac(),
            Hypothesis::Alternative,
            18.0,
            300,
            WeightSpec::late_emphasis(),
        )
        .unwrap();
        let a = predict_mean(&coarse);
        let b = predict_mean(&fine);
        assert!((a - b).abs() / b.abs() < 0.005, "coarse {a} fine {b}");
    }

    #[test]
    fn log_rank_variance_is_quarter_event_fraction_under_null() {
        // with p = 1/2 and identical arms the allocation odds stay exactly 1
        let grid = march(
            &default_model(0.7),
            &default_ac(),
            Hypothesis::Null,
            18.0,
            30,
            WeightSpec::log_rank(),
        )
        .unwrap();
        assert!(grid.allocation_odds.iter().all(|&phi| phi == 1.0));
        assert_relative_eq!(
            predict_variance(&grid),
            expected_event_fraction(&grid) / 4.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn variance_monotone_in_time() {
        let mut prev = 0.0;
        for &t in &[4.0, 8.0, 12.0, 16.0, 18.0] {
            let grid = march(
                &default_model(0.6),
                &default_ac(),
                Hypothesis::Alternative,
                t,
                30,
                WeightSpec::late_emphasis(),
            )
            .unwrap();
            let v = predict_variance(&grid);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn variance_linear_in_event_increments() {
        let mut grid = march(
            &default_model(0.6),
            &default_ac(),
            Hypothesis::Alternative,
            18.0,
            30,
            WeightSpec::late_emphasis(),
        )
        .unwrap();
        let base = predict_variance(&grid);
        for d in &mut grid.event_increments {
            *d *= 2.0;
        }
        assert_relative_eq!(predict_variance(&grid), 2.0 * base, epsilon = 1e-14);
    }

    #[test]
    fn refinement_error_halves_when_b_doubles() {
        let value = |b: u32| {
            let grid = march(
                &default_model(0.6),
                &default_ac(),
                Hypothesis::Alternative,
                18.0,
                b,
                WeightSpec::late_emphasis(),
            )
            .unwrap();
            predict_variance(&grid)
        };
        let (v15, v30, v60) = (value(15), value(30), value(60));
        let ratio = (v30 - v60).abs() / (v15 - v30).abs();
        assert!((0.35..=0.65).contains(&ratio), "refinement ratio {ratio}");
    }

    #[test]
    fn drift_sign_and_null() {
        let mu0 = predict_mu(
            &default_model(0.7),
            &default_ac(),
            Hypothesis::Null,
            18.0,
            30,
            WeightSpec::late_emphasis(),
        )
        .unwrap();
        assert_eq!(mu0, 0.0);
        let mu1 = predict_mu(
            &default_model(0.7),
            &default_ac(),
            Hypothesis::Alternative,
            18.0,
            30,
            WeightSpec::late_emphasis(),
        )
        .unwrap();
        assert!(mu1 < 0.0);
    }

    #[test]
    fn single_test_sample_size_ordering() {
        // under a delayed effect the late-emphasis test needs fewer subjects
        // than the standard log-rank test
        let n_for = |w: WeightSpec| {
            let mu = predict_mu(
                &default_model(0.7),
                &default_ac(),
                Hypothesis::Alternative,
                18.0,
                30,
                w,
            )
            .unwrap();
            let z = 1.959964 + 1.281552;
            (z / mu).powi(2)
        };
        assert!(n_for(WeightSpec::late_emphasis()) < n_for(WeightSpec::log_rank()));
    }

    #[test]
    fn event_fraction_null_dominates_alternative() {
        for &t in &[6.0, 12.0, 18.0] {
            let g0 = march(
                &default_model(0.6),
                &default_ac(),
                Hypothesis::Null,
                t,
                30,
                WeightSpec::log_rank(),
            )
            .unwrap();
            let g1 = march(
                &default_model(0.6),
                &default_ac(),
                Hypothesis::Alternative,
                t,
                30,
                WeightSpec::log_rank(),
            )
            .unwrap();
            assert!(expected_event_fraction(&g0) >= expected_event_fraction(&g1));
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = default_model(0.6);
        let ac = default_ac();
        assert!(march(&m, &ac, Hypothesis::Null, 0.0, 30, WeightSpec::log_rank()).is_err());
        assert!(march(&m, &ac, Hypothesis::Null, 18.0, 0, WeightSpec::log_rank()).is_err());
    }
}
