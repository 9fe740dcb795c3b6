//! Monte Carlo verification of group sequential maxcombo designs.
//!
//! Trials are generated under a configurable truth (possibly violating the
//! design assumptions), stopped by observed event counts, and tested by all
//! methods on the same simulated data: each single test with its surrogate
//! boundaries, the maxcombo with those same naive boundaries, the maxcombo
//! with predicted boundaries from either prediction engine, and the maxcombo
//! with boundaries re-derived from data-estimated correlations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::correlation::{
    assemble, CorrelationReport, CorrelationRow, EstimatedSource, GaussianApprox,
    StochasticSource,
};
use crate::design::{self, DesignReport, DesignSpec, MvnSettings, SourceKind};
#[cfg(test)]
use crate::design::MonitorRule;
use crate::error::{Error, Result};
use crate::mvn::{median_of_replicates, MvnProblem};
use crate::predict::stochastic::Hypothesis;
use crate::survival::{AccrualCensoring, TwoArmModel};
use crate::wlrt::{freeze, joint_statistics, JointStatistics, Subject, TrialData};

/// Boundaries of every method the simulator compares.
#[derive(Debug, Clone, Serialize)]
pub struct DesignBundle {
    /// The stochastic-prediction design; supplies n, d and shared structure.
    pub report: DesignReport,
    /// Maxcombo boundaries from the closed-form prediction engine.
    pub exact_boundaries: Vec<f64>,
}

impl DesignBundle {
    /// Solves the design under both prediction engines.
    pub fn solve(spec: &DesignSpec) -> Result<Self> {
        let mut sto_spec = spec.clone();
        sto_spec.source = SourceKind::PredSto;
        let report = design::design(&sto_spec)?;
        let mut exa_spec = spec.clone();
        exa_spec.source = SourceKind::PredExa;
        let exact_boundaries = match design::design(&exa_spec) {
            Ok(r) => r.boundaries,
            // closed forms only exist for the delayed-effect model; fall
            // back to the marching boundaries so the bundle stays usable
            Err(Error::Domain(_)) => report.boundaries.clone(),
            Err(e) => return Err(e),
        };
        Ok(Self { report, exact_boundaries })
    }
}

/// A simulation scenario: the solved design plus the true generation law.
#[derive(Debug, Clone)]
pub struct Scenario {
    /// Assumed design inputs (prediction model, spending, grid, solver).
    pub spec: DesignSpec,
    pub bundle: DesignBundle,
    /// True event-time law under the alternative; the null flattens it.
    pub true_model: TwoArmModel,
    /// True accrual profile and dropout rates.
    pub true_ac: AccrualCensoring,
    pub hypothesis: Hypothesis,
    pub replications: u64,
    pub master_seed: u64,
    /// Solver controls for the per-replicate estimated-boundary refresh.
    pub est_mvn: MvnSettings,
}

impl Scenario {
    /// A scenario whose truth equals the design assumptions.
    pub fn faithful(
        spec: DesignSpec,
        hypothesis: Hypothesis,
        replications: u64,
        master_seed: u64,
    ) -> Result<Self> {
        let bundle = DesignBundle::solve(&spec)?;
        let true_model = spec.model.clone();
        let true_ac = spec.ac.clone();
        Ok(Self {
            spec,
            bundle,
            true_model,
            true_ac,
            hypothesis,
            replications,
            master_seed,
            est_mvn: MvnSettings { accuracy: 2e-4, seed: 0, replicates: 1 },
        })
    }

    fn generation_model(&self) -> TwoArmModel {
        match self.hypothesis {
            Hypothesis::Null => self.true_model.null(),
            Hypothesis::Alternative => self.true_model.clone(),
        }
    }
}

/// Draws one trial of `n` subjects from the true law.
pub fn generate_trial(
    model: &TwoArmModel,
    ac: &AccrualCensoring,
    n: u64,
    rng: &mut impl Rng,
) -> TrialData {
    let p = model.assign_prob();
    let mut subjects = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let entry = ac.inverse_accrual_cdf(rng.gen::<f64>());
        let arm = u8::from(rng.gen::<f64>() < p);
        let law = if arm == 1 { model.treatment() } else { model.control() };
        let event_time = law.inverse_survival(1.0 - rng.gen::<f64>());
        let censor_draw: f64 = rng.gen();
        let rate = ac.censor_rate(arm);
        let censor_time =
            if rate > 0.0 { -(1.0 - censor_draw).ln() / rate } else { f64::INFINITY };
        subjects.push(Subject { entry, event_time, censor_time, arm });
    }
    TrialData { subjects }
}

/// The methods compared on one simulated trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MethodKind {
    /// One member of the combo tested alone with the surrogate boundaries.
    SingleTest(usize),
    McNaive,
    McPredSto,
    McPredExa,
    McEst,
}

/// Decision of one method on one trial.
#[derive(Debug, Clone, Copy, Default)]
struct Decision {
    interim: bool,
    combined: bool,
}

/// Everything one replicate reports back.
struct ReplicateOutcome {
    exhausted: bool,
    decisions: Vec<Decision>,
    /// Standardized rejection-frame statistics, stage-major.
    z: Vec<f64>,
    /// Estimated correlations for the six-pair report (K = 2 layouts);
    /// empty when estimation failed or K != 2.
    estimated_pairs: Vec<f64>,
    t_int: f64,
    t_fin: f64,
}

fn solve_stage_boundary(
    corr: Vec<Vec<f64>>,
    fixed: &[f64],
    tests: usize,
    target: f64,
    bracket: (f64, f64),
    settings: &MvnSettings,
) -> Result<f64> {
    let eval = |g: f64| -> Result<f64> {
        let mut upper = fixed.to_vec();
        upper.extend(std::iter::repeat(g).take(tests));
        let problem = MvnProblem::cdf(upper, corr.clone())?
            .with_accuracy(settings.accuracy)
            .with_seed(settings.seed)
            .with_replicates(settings.replicates);
        if settings.replicates <= 1 {
            Ok(crate::mvn::mvn_rectangle(&problem)?.value)
        } else {
            median_of_replicates(&problem, settings.replicates)
        }
    };
    solve_root(eval, bracket.0, bracket.1, target, 1e-4)
}

fn solve_root(
    mut f: impl FnMut(f64) -> Result<f64>,
    mut lo: f64,
    mut hi: f64,
    target: f64,
    xtol: f64,
) -> Result<f64> {
    let mut flo = f(lo)? - target;
    let mut fhi = f(hi)? - target;
    let mut grow = 0;
    while flo > 0.0 && grow < 8 {
        hi = lo;
        fhi = flo;
        lo -= 0.5;
        flo = f(lo)? - target;
        grow += 1;
    }
    while fhi < 0.0 && grow < 16 {
        lo = hi;
        flo = fhi;
        hi += 0.5;
        fhi = f(hi)? - target;
        grow += 1;
    }
    if flo > 0.0 || fhi < 0.0 {
        return Err(Error::Solver("boundary bracket failed".into()));
    }
    let mut side = 0i8;
    for iter in 0..60 {
        if hi - lo <= xtol {
            break;
        }
        let mut x =
            if fhi != flo { (lo * fhi - hi * flo) / (fhi - flo) } else { 0.5 * (lo + hi) };
        if iter % 4 == 3 || !(x > lo && x < hi) {
            x = 0.5 * (lo + hi);
        }
        let fx = f(x)? - target;
        if fx < 0.0 {
            lo = x;
            flo = fx;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            fhi = fx;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Runs the group sequential procedure for every method on one trial.
fn run_replicate(sc: &Scenario, model: &TwoArmModel, rep: u64) -> ReplicateOutcome {
    let weights = &sc.spec.combo;
    let k = weights.len();
    let report = &sc.bundle.report;
    let n_methods = k + 4;
    let exhausted = |t_int: f64, t_fin: f64| ReplicateOutcome {
        exhausted: true,
        decisions: vec![Decision::default(); n_methods],
        z: Vec::new(),
        estimated_pairs: Vec::new(),
        t_int,
        t_fin,
    };

    let mut rng = ChaCha12Rng::seed_from_u64(sc.master_seed);
    rng.set_stream(rep + 1);
    let trial = generate_trial(model, &sc.true_ac, report.n, &mut rng);

    let interim_count = (sc.spec.stage_fractions[0] * report.d as f64).ceil() as usize;
    let (t_int, t_fin) = match (
        trial.calendar_time_of_event(interim_count),
        trial.calendar_time_of_event(report.d as usize),
    ) {
        (Some(a), Some(b)) => (a, b),
        _ => return exhausted(f64::NAN, f64::NAN),
    };

    let view_int = freeze(&trial, t_int);
    let view_fin = freeze(&trial, t_fin);
    let (joint_int, joint_fin) =
        match (joint_statistics(&view_int, weights), joint_statistics(&view_fin, weights)) {
            (Ok(a), Ok(b)) => (a, b),
            _ => return exhausted(t_int, t_fin),
        };
    let z_int: Vec<f64> = (0..k).map(|i| -joint_int.statistic(i).standardized).collect();
    let z_fin: Vec<f64> = (0..k).map(|i| -joint_fin.statistic(i).standardized).collect();
    let max_int = z_int.iter().cloned().fold(f64::MIN, f64::max);
    let max_fin = z_fin.iter().cloned().fold(f64::MIN, f64::max);

    let mut decisions = Vec::with_capacity(n_methods);
    let naive = &report.naive_boundaries;
    for i in 0..k {
        let interim = z_int[i] > naive[0];
        decisions.push(Decision { interim, combined: interim || z_fin[i] > naive[1] });
    }
    let mc = |bounds: &[f64]| {
        let interim = max_int > bounds[0];
        Decision { interim, combined: interim || max_fin > bounds[1] }
    };
    decisions.push(mc(naive));
    decisions.push(mc(&report.boundaries));
    decisions.push(mc(&sc.bundle.exact_boundaries));
    decisions.push(estimated_decision(sc, &joint_int, &joint_fin, t_int, t_fin, max_int, max_fin, rep));

    let mut z = z_int;
    z.extend(z_fin);
    let estimated_pairs = estimated_correlations(&joint_int, &joint_fin, k);
    ReplicateOutcome { exhausted: false, decisions, z, estimated_pairs, t_int, t_fin }
}

/// Boundaries re-derived from data-estimated correlations: the interim
/// boundary from the interim freeze, the final boundary from the full data
/// with the interim boundary fixed at the value actually used.
#[allow(clippy::too_many_arguments)]
fn estimated_decision(
    sc: &Scenario,
    joint_int: &JointStatistics,
    joint_fin: &JointStatistics,
    t_int: f64,
    t_fin: f64,
    max_int: f64,
    max_fin: f64,
    rep: u64,
) -> Decision {
    let report = &sc.bundle.report;
    let k = sc.spec.combo.len();
    let settings = MvnSettings {
        seed: sc.master_seed ^ (0x517c_c1b7_2722_0a95u64.wrapping_mul(rep + 1)),
        ..sc.est_mvn
    };
    let fallback = Decision {
        interim: max_int > report.boundaries[0],
        combined: max_int > report.boundaries[0] || max_fin > report.boundaries[1],
    };

    // stage 1: within-stage correlations estimated at the interim
    let mut corr_int = vec![vec![0.0; k]; k];
    for i in 0..k {
        corr_int[i][i] = 1.0;
        for j in (i + 1)..k {
            let c = joint_int.correlation(i, j).clamp(-1.0, 1.0);
            corr_int[i][j] = c;
            corr_int[j][i] = c;
        }
    }
    let g1_guess = report.boundaries[0];
    let g1 = match solve_stage_boundary(
        corr_int.clone(),
        &[],
        k,
        1.0 - report.spending_schedule[0],
        (g1_guess - 0.2, g1_guess + 0.2),
        &settings,
    ) {
        Ok(g) => g,
        Err(_) => return fallback,
    };
    if max_int > g1 {
        return Decision { interim: true, combined: true };
    }

    // stage 2: the full matrix estimated from the final data
    let model = sc.spec.model.clone();
    let predicted = StochasticSource {
        model: &model,
        ac: &sc.spec.ac,
        hypothesis: Hypothesis::Null,
        b: sc.spec.b,
    };
    let est = EstimatedSource {
        stages: vec![(t_int, joint_int), (t_fin, joint_fin)],
        predicted,
        n: report.n as f64,
    };
    let assembled = match assemble(&est, &sc.spec.combo, &[t_int, t_fin]) {
        Ok(g) => g,
        Err(_) => return fallback,
    };
    let fixed: Vec<f64> = vec![g1; k];
    let g2_guess = report.boundaries[1];
    let g2 = match solve_stage_boundary(
        assembled.corr,
        &fixed,
        k,
        1.0 - report.spending_schedule[1],
        (g2_guess - 0.2, g2_guess + 0.2),
        &settings,
    ) {
        Ok(g) => g,
        Err(_) => return fallback,
    };
    Decision { interim: false, combined: max_fin > g2 }
}

/// Per-replicate estimated correlations for the six pairs of a two-test,
/// two-stage layout, ordered like the report rows.
fn estimated_correlations(
    joint_int: &JointStatistics,
    joint_fin: &JointStatistics,
    k: usize,
) -> Vec<f64> {
    if k != 2 {
        return Vec::new();
    }
    let ws_int = joint_int.correlation(0, 1);
    let ws_fin = joint_fin.correlation(0, 1);
    let wt = |idx: usize| {
        (joint_int.information[idx][idx] / joint_fin.information[idx][idx]).sqrt().min(1.0)
    };
    let (wt0, wt1) = (wt(0), wt(1));
    vec![ws_int, ws_fin, wt0, wt1, ws_int * wt0, ws_int * wt1]
}

/// Rejection proportions of one method.
#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub method: MethodKind,
    pub label: String,
    pub interim_rejections: u64,
    pub combined_rejections: u64,
    pub interim_proportion: f64,
    pub combined_proportion: f64,
    pub interim_se: f64,
    pub combined_se: f64,
}

/// Aggregated simulation results.
#[derive(Debug, Clone, Serialize)]
pub struct OperatingCharacteristics {
    pub replications: u64,
    pub usable: u64,
    pub exhausted: u64,
    pub methods: Vec<MethodSummary>,
    pub mean_interim_time: f64,
    pub mean_final_time: f64,
    /// Sample correlation matrix of the stacked statistics (the gold
    /// standard), stage-major.
    pub sample_correlation: Vec<Vec<f64>>,
    /// Mean estimated correlations for the six report pairs (two-test
    /// layouts only).
    pub mean_estimated_pairs: Vec<f64>,
}

impl OperatingCharacteristics {
    pub fn method(&self, kind: MethodKind) -> &MethodSummary {
        self.methods.iter().find(|m| m.method == kind).expect("method present")
    }

    /// CSV with one row per method and stage.
    pub fn to_csv(&self, hypothesis: &str) -> String {
        let mut out = String::from("method,stage,hypothesis,rejections,proportion,se\n");
        for m in &self.methods {
            out.push_str(&format!(
                "{},interim,{},{},{:.6},{:.6}\n",
                m.label, hypothesis, m.interim_rejections, m.interim_proportion, m.interim_se
            ));
            out.push_str(&format!(
                "{},combined,{},{},{:.6},{:.6}\n",
                m.label, hypothesis, m.combined_rejections, m.combined_proportion, m.combined_se
            ));
        }
        out
    }
}

/// Runs all replicates and aggregates every method on common random
/// numbers. Replicates draw from counter-based streams indexed by
/// replicate, and the fold runs in replicate order, so results do not
/// depend on scheduling.
pub fn operating_characteristics(sc: &Scenario) -> Result<OperatingCharacteristics> {
    let model = sc.generation_model();
    let k = sc.spec.combo.len();
    let n_methods = k + 4;
    let dim = k * sc.spec.stages();
    let outcomes: Vec<ReplicateOutcome> = (0..sc.replications)
        .into_par_iter()
        .map(|rep| run_replicate(sc, &model, rep))
        .collect();

    let mut interim = vec![0u64; n_methods];
    let mut combined = vec![0u64; n_methods];
    let mut exhausted = 0u64;
    let mut usable = 0u64;
    let mut sum_t = (0.0, 0.0);
    let mut z_sum = vec![0.0; dim];
    let mut z_outer = vec![vec![0.0; dim]; dim];
    let mut est_sum = vec![0.0; 6];
    let mut est_count = 0u64;
    for o in &outcomes {
        if o.exhausted {
            exhausted += 1;
            continue;
        }
        usable += 1;
        sum_t.0 += o.t_int;
        sum_t.1 += o.t_fin;
        for (m, dec) in o.decisions.iter().enumerate() {
            interim[m] += u64::from(dec.interim);
            combined[m] += u64::from(dec.combined);
        }
        for i in 0..dim {
            z_sum[i] += o.z[i];
            for j in 0..dim {
                z_outer[i][j] += o.z[i] * o.z[j];
            }
        }
        if o.estimated_pairs.len() == 6 {
            for (acc, v) in est_sum.iter_mut().zip(&o.estimated_pairs) {
                *acc += v;
            }
            est_count += 1;
        }
    }
    if usable == 0 {
        return Err(Error::Degenerate("every replicate was exhausted".into()));
    }
    let reps = sc.replications as f64;
    let uf = usable as f64;
    let mut methods = Vec::with_capacity(n_methods);
    let mut labels: Vec<(MethodKind, String)> = (0..k)
        .map(|i| (MethodKind::SingleTest(i), format!("single-{}", sc.spec.combo[i])))
        .collect();
    labels.push((MethodKind::McNaive, "mc-naive".into()));
    labels.push((MethodKind::McPredSto, "mc-pred-sto".into()));
    labels.push((MethodKind::McPredExa, "mc-pred-exa".into()));
    labels.push((MethodKind::McEst, "mc-est".into()));
    for (m, (kind, label)) in labels.into_iter().enumerate() {
        let pi = interim[m] as f64 / reps;
        let pc = combined[m] as f64 / reps;
        methods.push(MethodSummary {
            method: kind,
            label,
            interim_rejections: interim[m],
            combined_rejections: combined[m],
            interim_proportion: pi,
            combined_proportion: pc,
            interim_se: (pi * (1.0 - pi) / reps).sqrt(),
            combined_se: (pc * (1.0 - pc) / reps).sqrt(),
        });
    }
    let mut corr = vec![vec![0.0; dim]; dim];
    for i in 0..dim {
        for j in 0..dim {
            let cov = z_outer[i][j] / uf - z_sum[i] / uf * (z_sum[j] / uf);
            corr[i][j] = cov;
        }
    }
    let sd: Vec<f64> = (0..dim).map(|i| corr[i][i].sqrt()).collect();
    for i in 0..dim {
        for j in 0..dim {
            corr[i][j] /= sd[i] * sd[j];
        }
    }
    Ok(OperatingCharacteristics {
        replications: sc.replications,
        usable,
        exhausted,
        methods,
        mean_interim_time: sum_t.0 / uf,
        mean_final_time: sum_t.1 / uf,
        sample_correlation: corr,
        mean_estimated_pairs: if est_count > 0 {
            est_sum.iter().map(|s| s / est_count as f64).collect()
        } else {
            Vec::new()
        },
    })
}

/// The six-pair correlation comparison for a two-test, two-stage scenario:
/// gold sample correlations, both predictions, and the mean data-driven
/// estimates.
pub fn sample_correlation_report(
    sc: &Scenario,
    oc: &OperatingCharacteristics,
) -> Result<CorrelationReport> {
    if sc.spec.combo.len() != 2 || sc.spec.stages() != 2 {
        return Err(Error::Domain(
            "the correlation report covers the two-test, two-stage layout".into(),
        ));
    }
    let report = &sc.bundle.report;
    let predicted: &GaussianApprox = match sc.hypothesis {
        Hypothesis::Null => &report.corr_null,
        Hypothesis::Alternative => &report.corr_alt,
    };
    // the exact-prediction matrix at the same stopping times
    let times = match sc.hypothesis {
        Hypothesis::Null => &report.stopping_times_null,
        Hypothesis::Alternative => &report.stopping_times_alt,
    };
    let exa = design_exact_matrix(&sc.spec, sc.hypothesis, times)
        .unwrap_or_else(|_| predicted.clone());
    let gold = &oc.sample_correlation;
    let est = &oc.mean_estimated_pairs;
    let w = &sc.spec.combo;
    // index pairs in the stage-major layout
    let pairs = [
        ((1usize, 0usize), format!("{}(int)x{}(int)", w[1], w[0])),
        ((3, 2), format!("{}(fin)x{}(fin)", w[1], w[0])),
        ((0, 2), format!("{}(int)x{}(fin)", w[0], w[0])),
        ((1, 3), format!("{}(int)x{}(fin)", w[1], w[1])),
        ((1, 2), format!("{}(int)x{}(fin)", w[1], w[0])),
        ((0, 3), format!("{}(int)x{}(fin)", w[0], w[1])),
    ];
    let est_for = [0usize, 1, 2, 3, 4, 5];
    let mut rows = Vec::with_capacity(6);
    for (row, ((i, j), pair)) in pairs.into_iter().enumerate() {
        rows.push(CorrelationRow {
            pair,
            gold: gold[i][j],
            predicted_stochastic: predicted.corr[i][j],
            predicted_exact: exa.corr[i][j],
            estimated: est.get(est_for[row]).copied().unwrap_or(f64::NAN),
        });
    }
    Ok(CorrelationReport { rows })
}

fn design_exact_matrix(
    spec: &DesignSpec,
    hypothesis: Hypothesis,
    times: &[f64],
) -> Result<GaussianApprox> {
    let src = crate::correlation::ExactSource {
        scenario: design::exact_scenario_of(&spec.model, &spec.ac)?,
        hypothesis,
    };
    assemble(&src, &spec.combo, times)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::SpendingFamily;
    use crate::weight::WeightSpec;

    fn lam() -> f64 {
        2f64.ln() / 6.0
    }

    fn small_spec(theta: f64) -> DesignSpec {
        DesignSpec {
            model: TwoArmModel::two_piece(lam(), theta, 2.0, 0.5).unwrap(),
            ac: AccrualCensoring::uniform(14.0, 18.0).unwrap(),
            combo: vec![WeightSpec::log_rank(), WeightSpec::late_emphasis()],
            stage_fractions: vec![0.6, 1.0],
            monitor: MonitorRule::SurrogateEvents,
            alpha: 0.025,
            beta: 0.1,
            spending: SpendingFamily::default(),
            b: 30,
            source: SourceKind::PredSto,
            mvn: MvnSettings::default(),
        }
    }

    #[test]
    fn generated_trial_matches_event_fraction() {
        // empirical event fraction by calendar tau close to the predicted one
        let model = TwoArmModel::two_piece(lam(), 1.0, 2.0, 0.5).unwrap();
        let ac = AccrualCensoring::uniform(14.0, 18.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let n = 10_000;
        let trial = generate_trial(&model, &ac, n, &mut rng);
        let events_by_tau = trial
            .subjects
            .iter()
            .filter(|s| s.event_time <= 18.0 - s.entry)
            .count() as f64;
        let grid = crate::predict::stochastic::march(
            &model,
            &ac,
            Hypothesis::Null,
            18.0,
            30,
            WeightSpec::log_rank(),
        )
        .unwrap();
        let expected = crate::predict::stochastic::expected_event_fraction(&grid);
        let se = (expected * (1.0 - expected) / n as f64).sqrt();
        assert!(
            (events_by_tau / n as f64 - expected).abs() < 3.0 * se + 0.003,
            "{} vs {expected}",
            events_by_tau / n as f64
        );
    }

    #[test]
    fn empty_trial() {
        let model = TwoArmModel::two_piece(lam(), 0.7, 2.0, 0.5).unwrap();
        let ac = AccrualCensoring::uniform(14.0, 18.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let trial = generate_trial(&model, &ac, 0, &mut rng);
        assert!(trial.is_empty());
    }

    #[test]
    fn staircase_profile_enrolls_everyone_by_the_accrual_end() {
        let rates = vec![1.0, 2.0, 3.0, 4.0, 6.0, 6.0, 6.0, 6.0, 6.0, 6.0, 6.0, 6.0, 6.0, 6.0];
        let ac = AccrualCensoring::new(
            14.0,
            18.0,
            crate::survival::AccrualProfile::Piecewise(rates),
            [0.0, 0.0],
        )
        .unwrap();
        let model = TwoArmModel::two_piece(lam(), 0.7, 2.0, 0.5).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let trial = generate_trial(&model, &ac, 5000, &mut rng);
        assert!(trial.subjects.iter().all(|s| s.entry <= 14.0));
        // months 0..4 hold 10/70 of enrollment
        let early = trial.subjects.iter().filter(|s| s.entry < 4.0).count() as f64 / 5000.0;
        assert!((early - 10.0 / 70.0).abs() < 0.02, "early fraction {early}");
    }

    #[test]
    fn boundary_extremes_control_decisions() {
        // +inf boundary never rejects, -inf interim always rejects
        let spec = small_spec(0.6);
        let mut sc = Scenario::faithful(spec, Hypothesis::Null, 40, 99).unwrap();
        sc.bundle.report.boundaries = vec![f64::INFINITY, f64::INFINITY];
        sc.bundle.exact_boundaries = vec![f64::NEG_INFINITY, f64::NEG_INFINITY];
        let oc = operating_characteristics(&sc).unwrap();
        assert_eq!(oc.method(MethodKind::McPredSto).combined_rejections, 0);
        assert_eq!(oc.method(MethodKind::McPredExa).interim_rejections, oc.usable);
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = small_spec(0.6);
        let sc = Scenario::faithful(spec, Hypothesis::Null, 30, 123).unwrap();
        let a = operating_characteristics(&sc).unwrap();
        let b = operating_characteristics(&sc).unwrap();
        assert_eq!(
            a.method(MethodKind::McEst).combined_rejections,
            b.method(MethodKind::McEst).combined_rejections
        );
        assert_eq!(a.sample_correlation[0][1].to_bits(), b.sample_correlation[0][1].to_bits());
    }

    #[test]
    fn hand_built_trial_decision_path() {
        // two-stage decisions checked by hand on a deterministic dataset:
        // construct a trial whose interim maximum exceeds a low boundary
        let spec = small_spec(0.6);
        let mut sc = Scenario::faithful(spec, Hypothesis::Alternative, 1, 5).unwrap();
        // effectively single possible decision: reject at interim
        sc.bundle.report.boundaries = vec![-10.0, 10.0];
        let oc = operating_characteristics(&sc).unwrap();
        let m = oc.method(MethodKind::McPredSto);
        assert_eq!(m.interim_rejections, 1);
        assert_eq!(m.combined_rejections, 1);
    }

    #[test]
    fn naive_dominates_predicted_rejections() {
        let spec = small_spec(0.6);
        let sc = Scenario::faithful(spec, Hypothesis::Null, 300, 2024).unwrap();
        let oc = operating_characteristics(&sc).unwrap();
        // naive boundaries are lower, so naive rejects whenever predicted does
        assert!(
            oc.method(MethodKind::McNaive).combined_rejections
                >= oc.method(MethodKind::McPredSto).combined_rejections
        );
        // interim rejections never exceed combined
        for m in &oc.methods {
            assert!(m.interim_rejections <= m.combined_rejections);
        }
    }

    #[test]
    fn correlation_report_layout() {
        let spec = small_spec(0.6);
        let sc = Scenario::faithful(spec, Hypothesis::Null, 200, 31).unwrap();
        let oc = operating_characteristics(&sc).unwrap();
        let report = sample_correlation_report(&sc, &oc).unwrap();
        assert_eq!(report.rows.len(), 6);
        for row in &report.rows {
            assert!(row.gold.abs() <= 1.0);
            assert!(row.predicted_stochastic.abs() <= 1.0);
            assert!(row.estimated.abs() <= 1.0);
        }
        let csv = report.to_csv();
        assert!(csv.lines().count() == 7);
        // the statistic is perfectly correlated with itself
        assert!((oc.sample_correlation[0][0] - 1.0).abs() < 1e-12);
    }
}
