//! End-to-end group sequential design computation.
//!
//! The pipeline predicts stopping times from monitored information
//! fractions, assembles the null and alternative correlation matrices,
//! solves the stage-wise error-spending equations for the maxcombo
//! boundaries, and finds the smallest sample size meeting the power target.
//! Statistics are handled in the rejection frame: the raw weighted log-rank
//! drift is negative when the treatment helps, so drifts are negated and
//! rejection means the maximum statistic exceeds the boundary.

use serde::{Deserialize, Serialize};

use crate::correlation::{assemble, ExactSource, GaussianApprox, StochasticSource};
use crate::error::{Error, Result};
use crate::mvn::{self, median_of_replicates, MvnProblem};
use crate::predict::exact::{self, ExactScenario};
use crate::predict::stochastic::{self, Hypothesis};
use crate::survival::{AccrualCensoring, TwoArmModel};
use crate::weight::WeightSpec;

/// Error spending family: cumulative type I error as a function of the
/// information fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum SpendingFamily {
    /// `alpha * nu^exponent`.
    Power { param: f64 },
    /// O'Brien-Fleming-type Lan-DeMets spending adapted one-sided:
    /// `2 * (1 - Phi(z_{alpha/2} / sqrt(nu)))`.
    ObrienFleming,
}

impl Default for SpendingFamily {
    fn default() -> Self {
        // calibrated so the interim spend matches the reported group
        // sequential maxcombo operating characteristics at nu = 0.6
        SpendingFamily::Power { param: 3.12 }
    }
}

/// Cumulative error spent by information fraction `nu`.
pub fn spending(family: SpendingFamily, alpha: f64, nu: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&nu) {
        return Err(Error::Domain(format!("information fraction {nu} outside [0,1]")));
    }
    Ok(match family {
        SpendingFamily::Power { param } => alpha * nu.powf(param),
        SpendingFamily::ObrienFleming => {
            if nu == 0.0 {
                0.0
            } else {
                let z = mvn::phi_inv(1.0 - alpha / 2.0);
                2.0 * (1.0 - mvn::phi(z / nu.sqrt()))
            }
        }
    })
}

/// Which engine supplies correlations (and, for the estimated method inside
/// the simulator, how boundaries are refreshed).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    PredSto,
    PredExa,
    Est,
    Naive,
}

/// Quasi-Monte-Carlo controls for the boundary and power equations.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MvnSettings {
    #[serde(default = "default_accuracy")]
    pub accuracy: f64,
    #[serde(default = "default_mvn_seed")]
    pub seed: u64,
    #[serde(default = "default_replicates")]
    pub replicates: u32,
}

fn default_accuracy() -> f64 {
    1e-5
}

fn default_mvn_seed() -> u64 {
    20_240_801
}

fn default_replicates() -> u32 {
    5
}

impl Default for MvnSettings {
    fn default() -> Self {
        Self {
            accuracy: default_accuracy(),
            seed: default_mvn_seed(),
            replicates: default_replicates(),
        }
    }
}

/// How stage information fractions are monitored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MonitorRule {
    /// Observed event counts, the surrogate information fraction.
    SurrogateEvents,
    /// Predicted variance of one combo member.
    Information(usize),
}

/// Full trial design input.
#[derive(Debug, Clone)]
pub struct DesignSpec {
    /// Alternative-hypothesis law; the null is derived by flattening the
    /// hazard ratios to one.
    pub model: TwoArmModel,
    pub ac: AccrualCensoring,
    /// Tests in the combo.
    pub combo: Vec<WeightSpec>,
    /// Information fractions of the monitored test at each stage, ending
    /// at 1.
    pub stage_fractions: Vec<f64>,
    /// What quantity defines the stage fractions.
    pub monitor: MonitorRule,
    /// One-sided type I error.
    pub alpha: f64,
    /// Type II error.
    pub beta: f64,
    pub spending: SpendingFamily,
    /// Marching-grid slices per month.
    pub b: u32,
    pub source: SourceKind,
    pub mvn: MvnSettings,
}

impl DesignSpec {
    pub fn validate(&self) -> Result<()> {
        if self.combo.is_empty() {
            return Err(Error::Domain("combo needs at least one test".into()));
        }
        if let MonitorRule::Information(idx) = self.monitor {
            if idx >= self.combo.len() {
                return Err(Error::Domain(format!(
                    "monitor weight index {idx} outside the combo of {} tests",
                    self.combo.len()
                )));
            }
        }
        if self.stage_fractions.is_empty()
            || (self.stage_fractions.last().copied().unwrap_or(0.0) - 1.0).abs() > 1e-12
        {
            return Err(Error::Domain("stage fractions must end at 1".into()));
        }
        let mut prev = 0.0;
        for &nu in &self.stage_fractions {
            if !(nu > prev && nu <= 1.0) {
                return Err(Error::Domain(format!(
                    "stage fractions must increase within (0,1], got {nu} after {prev}"
                )));
            }
            prev = nu;
        }
        for p in [self.alpha, self.beta] {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::Domain(format!("error rates must lie in (0,1), got {p}")));
            }
        }
        if self.b == 0 {
            return Err(Error::Domain("b must be at least 1".into()));
        }
        Ok(())
    }

    pub fn stages(&self) -> usize {
        self.stage_fractions.len()
    }

    fn study_end(&self) -> f64 {
        self.ac.study_end()
    }
}

/// Everything the design run produces.
#[derive(Debug, Clone, Serialize)]
pub struct DesignReport {
    pub combo: Vec<WeightSpec>,
    pub stage_fractions: Vec<f64>,
    pub source: SourceKind,
    /// Predicted stopping times when the null generates the data.
    pub stopping_times_null: Vec<f64>,
    /// Predicted stopping times under the alternative; the last one is the
    /// study end.
    pub stopping_times_alt: Vec<f64>,
    /// Maxcombo boundaries per stage, rejection when the maximum exceeds
    /// them.
    pub boundaries: Vec<f64>,
    /// Single-test boundaries from the surrogate information fraction,
    /// the naive comparison method.
    pub naive_boundaries: Vec<f64>,
    /// Cumulative spend at each stage.
    pub spending_schedule: Vec<f64>,
    /// Subjects.
    pub n: u64,
    /// Target event count.
    pub d: u64,
    /// Expected event fraction per subject at the study end under the
    /// alternative.
    pub event_fraction: f64,
    /// Cumulative rejection probability under the alternative by stage;
    /// the last entry is the attained power.
    pub power_by_stage: Vec<f64>,
    /// Rejection-frame standardized drifts per subject, stage-major.
    pub drift: Vec<f64>,
    pub corr_null: GaussianApprox,
    pub corr_alt: GaussianApprox,
}

/// Monotone root bracketing on an increasing function: returns `x` with
/// `f(x) = target` within `xtol`, by the Illinois variant of regula falsi.
fn solve_increasing(
    mut f: impl FnMut(f64) -> Result<f64>,
    lo: f64,
    hi: f64,
    target: f64,
    xtol: f64,
) -> Result<f64> {
    let mut a = lo;
    let mut b = hi;
    let mut fa = f(a)? - target;
    let mut fb = f(b)? - target;
    if fa > 0.0 || fb < 0.0 {
        return Err(Error::Solver(format!(
            "no root in bracket [{a}, {b}]: f-target = {fa:.3e} .. {fb:.3e}"
        )));
    }
    let mut side = 0i8;
    for iter in 0..100 {
        if b - a <= xtol {
            break;
        }
        // Illinois regula falsi with a periodic bisection step so the
        // bracket shrinks geometrically even on flat stretches
        let mut x = if fb != fa { (a * fb - b * fa) / (fb - fa) } else { 0.5 * (a + b) };
        if iter % 4 == 3 || !(x > a && x < b) {
            x = 0.5 * (a + b);
        }
        let fx = f(x)? - target;
        if fx < 0.0 {
            a = x;
            fa = fx;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = x;
            fb = fx;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    Ok(0.5 * (a + b))
}

/// The scenario parameters for closed-form prediction, extracted from a
/// delayed-effect model.
pub fn exact_scenario_of(model: &TwoArmModel, ac: &AccrualCensoring) -> Result<ExactScenario> {
    let control = model.control();
    let hazards = control.hazards();
    if hazards.windows(2).any(|w| (w[0] - w[1]).abs() > 1e-12) {
        return Err(Error::Domain(
            "closed-form prediction needs an exponential control arm".into(),
        ));
    }
    let lambda = hazards[0];
    let t_haz = model.treatment().hazards();
    let ratios = model.hazard_ratios();
    let eps = match ratios.iter().position(|&r| (r - 1.0).abs() > 1e-12) {
        None => 0.0,
        Some(q) => {
            // all later ratios must agree: a single hazard change
            let theta = ratios[q];
            if ratios[q..].iter().any(|&r| (r - theta).abs() > 1e-12) || q > 1 {
                return Err(Error::Domain(
                    "closed-form prediction needs a single-change treatment arm".into(),
                ));
            }
            if q == 0 {
                0.0
            } else {
                model.treatment().change_points()[q - 1]
            }
        }
    };
    let theta = t_haz.last().unwrap() / lambda;
    ExactScenario::new(lambda, theta, eps, ac.accrual_duration(), model.assign_prob())
}

fn hyp_model(spec: &DesignSpec, hypothesis: Hypothesis) -> TwoArmModel {
    match hypothesis {
        Hypothesis::Null => spec.model.null(),
        Hypothesis::Alternative => spec.model.clone(),
    }
}

/// Monitored quantity at `t`: event fraction for log-rank monitoring
/// (the surrogate information fraction), otherwise the predicted variance
/// of the monitoring test.
fn monitored_quantity(spec: &DesignSpec, hypothesis: Hypothesis, t: f64) -> Result<f64> {
    let monitor = match spec.monitor {
        MonitorRule::SurrogateEvents => WeightSpec::log_rank(),
        MonitorRule::Information(idx) => spec.combo[idx],
    };
    let surrogate = monitor == WeightSpec::log_rank();
    if !surrogate && spec.source == SourceKind::PredExa {
        let sc = exact_scenario_of(&spec.model, &spec.ac)?;
        return exact::exact_variance(hypothesis, monitor, t, &sc, 1.0);
    }
    // event-count monitoring is tied to the grid-based event target d, so
    // both prediction sources share the grid event fraction
    let model = hyp_model(spec, Hypothesis::Alternative);
    let grid = stochastic::march(&model, &spec.ac, hypothesis, t, spec.b, monitor)?;
    if surrogate {
        Ok(stochastic::expected_event_fraction(&grid))
    } else {
        Ok(stochastic::predict_variance(&grid))
    }
}

/// Solves the monitoring equations for the stopping times under one
/// hypothesis. Targets are anchored at the alternative's study-end value.
pub fn predict_stopping_times(spec: &DesignSpec, hypothesis: Hypothesis) -> Result<Vec<f64>> {
    let tau = spec.study_end();
    let anchor = monitored_quantity(spec, Hypothesis::Alternative, tau)?;
    if anchor <= 0.0 {
        return Err(Error::Degenerate("no information accrues by the study end".into()));
    }
    let cap = tau + 5.0 * spec.ac.accrual_duration();
    let mut times = Vec::with_capacity(spec.stages());
    for &nu in &spec.stage_fractions {
        if hypothesis == Hypothesis::Alternative && (nu - 1.0).abs() < 1e-12 {
            times.push(tau);
            continue;
        }
        let target = nu * anchor;
        let reachable = monitored_quantity(spec, hypothesis, cap)?;
        if reachable < target {
            return Err(Error::InfeasibleStage(format!(
                "monitoring target {target:.6} unreachable by the horizon cap {cap}"
            )));
        }
        let t = solve_increasing(
            |t| monitored_quantity(spec, hypothesis, t),
            1e-4,
            cap,
            target,
            1e-6,
        )?;
        times.push(t);
    }
    Ok(times)
}

fn correlation_matrix(
    spec: &DesignSpec,
    hypothesis: Hypothesis,
    times: &[f64],
) -> Result<GaussianApprox> {
    let model = hyp_model(spec, Hypothesis::Alternative);
    match spec.source {
        SourceKind::PredExa => {
            let src = ExactSource {
                scenario: exact_scenario_of(&spec.model, &spec.ac)?,
                hypothesis,
            };
            assemble(&src, &spec.combo, times)
        }
        _ => {
            let src = StochasticSource { model: &model, ac: &spec.ac, hypothesis, b: spec.b };
            assemble(&src, &spec.combo, times)
        }
    }
}

/// `P(max over tests <= g_m at every stage m)` for stage-wise bounds,
/// evaluated on the leading block of the stacked correlation matrix.
pub fn no_rejection_probability(
    corr: &GaussianApprox,
    tests: usize,
    bounds: &[f64],
    shift: Option<&[f64]>,
    settings: &MvnSettings,
) -> Result<f64> {
    let stages = bounds.len();
    let d = tests * stages;
    let mut upper = Vec::with_capacity(d);
    for (m, &g) in bounds.iter().enumerate() {
        for k in 0..tests {
            let delta = shift.map_or(0.0, |s| s[m * tests + k]);
            upper.push(g - delta);
        }
    }
    let block = corr.leading_block(stages, tests);
    let problem = MvnProblem::cdf(upper, block)?
        .with_accuracy(settings.accuracy)
        .with_seed(settings.seed)
        .with_replicates(settings.replicates);
    median_of_replicates(&problem, settings.replicates)
}

/// Sequentially solves the stage-wise spending equations for the boundary
/// vector on the standardized scale.
pub fn solve_boundaries(
    spec: &DesignSpec,
    corr_null: &GaussianApprox,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let tests = spec.combo.len();
    let mut schedule = Vec::with_capacity(spec.stages());
    for &nu in &spec.stage_fractions {
        schedule.push(spending(spec.spending, spec.alpha, nu)?);
    }
    let mut bounds: Vec<f64> = Vec::with_capacity(spec.stages());
    let mut prev_spend = 0.0;
    for (m, &spend) in schedule.iter().enumerate() {
        if spend - prev_spend <= 0.0 {
            return Err(Error::Degenerate(format!(
                "stage {m} spends no error: increment {:.3e}",
                spend - prev_spend
            )));
        }
        let target = 1.0 - spend;
        let eval = |g: f64, bounds: &[f64]| {
            let mut stage_bounds = bounds.to_vec();
            stage_bounds.push(g);
            no_rejection_probability(corr_null, tests, &stage_bounds, None, &spec.mvn)
        };
        // bracket between the single-test quantile and its Bonferroni cap
        let inc = spend - prev_spend;
        let lo = (mvn::phi_inv(1.0 - inc) - 0.5).max(0.0);
        let hi = (mvn::phi_inv(1.0 - inc / (2.0 * tests as f64)) + 0.5).min(15.0);
        let g = solve_increasing(|g| eval(g, &bounds), lo, hi, target, 1e-6)
            .or_else(|_| solve_increasing(|g| eval(g, &bounds), 0.0, 15.0, target, 1e-6))
            .map_err(|e| Error::Solver(format!("stage {m} boundary: {e}")))?;
        bounds.push(g);
        prev_spend = spend;
    }
    Ok((bounds, schedule))
}

/// Boundaries of a single test monitored by the surrogate information
/// fraction: the correlation between stages is the square root of the
/// fraction ratio. These are also the naive maxcombo boundaries.
pub fn solve_single_test_boundaries(spec: &DesignSpec) -> Result<Vec<f64>> {
    let m = spec.stages();
    let mut corr = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
            corr[i][j] = (spec.stage_fractions[lo] / spec.stage_fractions[hi]).sqrt();
        }
    }
    let fake = GaussianApprox {
        labels: (0..m).map(|s| (s, WeightSpec::log_rank())).collect(),
        drift: vec![0.0; m],
        corr,
        repaired: false,
    };
    let single = DesignSpec {
        combo: vec![WeightSpec::log_rank()],
        monitor: MonitorRule::SurrogateEvents,
        ..spec.clone()
    };
    let (bounds, _) = solve_boundaries(&single, &fake)?;
    Ok(bounds)
}

/// Rejection-frame standardized drift vector at the alternative's stopping
/// times, always from the marching predictor.
pub fn drift_vector(spec: &DesignSpec, times: &[f64]) -> Result<Vec<f64>> {
    let mut drift = Vec::with_capacity(times.len() * spec.combo.len());
    for &t in times {
        for &w in &spec.combo {
            let mu = stochastic::predict_mu(
                &spec.model,
                &spec.ac,
                Hypothesis::Alternative,
                t,
                spec.b,
                w,
            )?;
            drift.push(-mu);
        }
    }
    Ok(drift)
}

/// Smallest integer sample size meeting the type II error target, plus the
/// event target and cumulative per-stage rejection probabilities.
pub fn solve_sample_size(
    spec: &DesignSpec,
    boundaries: &[f64],
    corr_alt: &GaussianApprox,
    drift: &[f64],
) -> Result<(u64, u64, Vec<f64>)> {
    if drift.iter().all(|&x| x <= 0.0) {
        return Err(Error::NoEffect);
    }
    let tests = spec.combo.len();
    let type2 = |n: f64| -> Result<f64> {
        let shift: Vec<f64> = drift.iter().map(|&mu| n.sqrt() * mu).collect();
        no_rejection_probability(corr_alt, tests, boundaries, Some(&shift), &spec.mvn)
    };
    // warm bracket from the strongest single test at the final analysis
    let strongest = drift[drift.len() - tests..]
        .iter()
        .cloned()
        .fold(0.0f64, f64::max);
    let z = mvn::phi_inv(1.0 - spec.alpha) + mvn::phi_inv(1.0 - spec.beta);
    let guess = (z / strongest).powi(2);
    let (mut lo, mut hi) = ((0.7 * guess).max(10.0), (2.0 * guess).min(1e6));
    if type2(hi)? > spec.beta {
        hi = 1e6;
        if type2(hi)? > spec.beta {
            return Err(Error::InfeasibleStage(
                "power target unreachable below 1e6 subjects".into(),
            ));
        }
    }
    if type2(lo)? <= spec.beta {
        lo = 10.0;
        if type2(lo)? <= spec.beta {
            hi = lo;
        }
    }
    while hi - lo > 0.25 {
        let mid = 0.5 * (lo + hi);
        if type2(mid)? <= spec.beta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut n = lo.ceil().max(1.0);
    while type2(n)? > spec.beta {
        n += 1.0;
    }

    let model = hyp_model(spec, Hypothesis::Alternative);
    let grid = stochastic::march(
        &model,
        &spec.ac,
        Hypothesis::Alternative,
        spec.study_end(),
        spec.b,
        WeightSpec::log_rank(),
    )?;
    let fraction = stochastic::expected_event_fraction(&grid);
    let d = (n * fraction).ceil() as u64;

    let mut power_by_stage = Vec::with_capacity(spec.stages());
    for m in 1..=spec.stages() {
        let shift: Vec<f64> = drift[..m * tests].iter().map(|&mu| n.sqrt() * mu).collect();
        let q = no_rejection_probability(corr_alt, tests, &boundaries[..m], Some(&shift), &spec.mvn)?;
        power_by_stage.push(1.0 - q);
    }
    Ok((n as u64, d, power_by_stage))
}

/// Required event count of the standard log-rank test under proportional
/// hazards, the closed-form special case.
pub fn schoenfeld_events(alpha: f64, beta: f64, p: f64, log_hazard_ratio: f64) -> Result<u64> {
    if log_hazard_ratio == 0.0 {
        return Err(Error::NoEffect);
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("assignment probability {p} outside (0,1)")));
    }
    let z = mvn::phi_inv(1.0 - alpha) + mvn::phi_inv(1.0 - beta);
    Ok((z * z / (p * (1.0 - p) * log_hazard_ratio * log_hazard_ratio)).ceil() as u64)
}

/// Runs the whole design: stopping times, correlation matrices, boundaries,
/// sample size.
pub fn design(spec: &DesignSpec) -> Result<DesignReport> {
    spec.validate()?;
    if spec.source == SourceKind::Est {
        return Err(Error::Domain(
            "the estimated source needs trial data; designs use a prediction source".into(),
        ));
    }
    let times_null = predict_stopping_times(spec, Hypothesis::Null)?;
    let times_alt = predict_stopping_times(spec, Hypothesis::Alternative)?;
    let mut corr_null = correlation_matrix(spec, Hypothesis::Null, &times_null)?;
    let mut corr_alt = correlation_matrix(spec, Hypothesis::Alternative, &times_alt)?;
    let naive_boundaries = solve_single_test_boundaries(spec)?;
    let (boundaries, schedule) = if spec.source == SourceKind::Naive {
        let mut schedule = Vec::with_capacity(spec.stages());
        for &nu in &spec.stage_fractions {
            schedule.push(spending(spec.spending, spec.alpha, nu)?);
        }
        (naive_boundaries.clone(), schedule)
    } else {
        solve_boundaries(spec, &corr_null)?
    };
    let drift = drift_vector(spec, &times_alt)?;
    corr_alt.drift = drift.clone();
    corr_null.drift = vec![0.0; corr_null.dim()];
    let (n, d, power_by_stage) = solve_sample_size(spec, &boundaries, &corr_alt, &drift)?;
    let model = spec.model.clone();
    let grid = stochastic::march(
        &model,
        &spec.ac,
        Hypothesis::Alternative,
        spec.study_end(),
        spec.b,
        WeightSpec::log_rank(),
    )?;
    Ok(DesignReport {
        combo: spec.combo.clone(),
        stage_fractions: spec.stage_fractions.clone(),
        source: spec.source,
        stopping_times_null: times_null,
        stopping_times_alt: times_alt,
        boundaries,
        naive_boundaries,
        spending_schedule: schedule,
        n,
        d,
        event_fraction: stochastic::expected_event_fraction(&grid),
        power_by_stage,
        drift,
        corr_null,
        corr_alt,
    })
}
