//! Correlation matrices of stacked test statistics.
//!
//! Three entry types fill the matrix: within one stage the covariance-based
//! correlation of two tests; within one test across stages the square root
//! of the information fraction; and across both axes the product of the two,
//! bridged through the later test evaluated at the earlier time. Sources may
//! supply predicted or estimated variances and covariances.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::predict::exact::{self, ExactScenario};
use crate::predict::stochastic::{self, Hypothesis};
use crate::survival::{AccrualCensoring, TwoArmModel};
use crate::weight::WeightSpec;
use crate::wlrt::JointStatistics;

/// Supplies variances and covariances of statistic numerators for requested
/// (weight, time) pairs, on any consistent scale.
pub trait VarianceSource {
    fn variance(&self, weight: WeightSpec, t: f64) -> Result<f64>;
    fn covariance(&self, w1: WeightSpec, w2: WeightSpec, t: f64) -> Result<f64>;
}

/// Marching-scheme predictions.
pub struct StochasticSource<'a> {
    pub model: &'a TwoArmModel,
    pub ac: &'a AccrualCensoring,
    pub hypothesis: Hypothesis,
    pub b: u32,
}

impl VarianceSource for StochasticSource<'_> {
    fn variance(&self, weight: WeightSpec, t: f64) -> Result<f64> {
        let grid = stochastic::march(self.model, self.ac, self.hypothesis, t, self.b, weight)?;
        Ok(stochastic::predict_variance(&grid))
    }

    fn covariance(&self, w1: WeightSpec, w2: WeightSpec, t: f64) -> Result<f64> {
        let grid = stochastic::march(self.model, self.ac, self.hypothesis, t, self.b, w1)?;
        Ok(stochastic::predict_covariance(&grid, w1, w2))
    }
}

/// Closed-form predictions for the delayed-effect model.
pub struct ExactSource {
    pub scenario: ExactScenario,
    pub hypothesis: Hypothesis,
}

impl VarianceSource for ExactSource {
    fn variance(&self, weight: WeightSpec, t: f64) -> Result<f64> {
        exact::exact_variance(self.hypothesis, weight, t, &self.scenario, 1.0)
    }

    fn covariance(&self, w1: WeightSpec, w2: WeightSpec, t: f64) -> Result<f64> {
        exact::exact_covariance(w1, w2, t, self.hypothesis, &self.scenario, 1.0)
    }
}

/// Data-driven estimates at frozen stage times, falling back to scaled
/// predictions for times with no data yet (the only causal choice at an
/// interim look: the final freeze does not exist).
pub struct EstimatedSource<'a> {
    /// Stage freezes available so far: (analysis time, joint statistics).
    pub stages: Vec<(f64, &'a JointStatistics)>,
    /// Prediction used for not-yet-observed times.
    pub predicted: StochasticSource<'a>,
    /// Subjects backing the predictions, bridging per-subject scale to the
    /// count scale of the estimates.
    pub n: f64,
}

impl EstimatedSource<'_> {
    fn lookup(&self, t: f64) -> Option<&JointStatistics> {
        self.stages
            .iter()
            .find(|(st, _)| (st - t).abs() < 1e-9)
            .map(|(_, js)| *js)
    }

    fn weight_index(js: &JointStatistics, w: WeightSpec) -> Result<usize> {
        js.weights
            .iter()
            .position(|&x| x == w)
            .ok_or_else(|| Error::Domain(format!("weight {w} not estimated at this stage")))
    }
}

impl VarianceSource for EstimatedSource<'_> {
    fn variance(&self, weight: WeightSpec, t: f64) -> Result<f64> {
        match self.lookup(t) {
            Some(js) => {
                let k = Self::weight_index(js, weight)?;
                Ok(js.information[k][k])
            }
            None => Ok(self.n * self.predicted.variance(weight, t)?),
        }
    }

    fn covariance(&self, w1: WeightSpec, w2: WeightSpec, t: f64) -> Result<f64> {
        match self.lookup(t) {
            Some(js) => {
                let i = Self::weight_index(js, w1)?;
                let j = Self::weight_index(js, w2)?;
                Ok(js.information[i][j])
            }
            None => Ok(self.n * self.predicted.covariance(w1, w2, t)?),
        }
    }
}

/// Correlation of two tests at the same analysis time.
pub fn within_stage_cor(
    src: &dyn VarianceSource,
    w1: WeightSpec,
    w2: WeightSpec,
    t: f64,
) -> Result<f64> {
    if w1 == w2 {
        return Ok(1.0);
    }
    let v1 = src.variance(w1, t)?;
    let v2 = src.variance(w2, t)?;
    if v1 <= 0.0 || v2 <= 0.0 {
        return Err(Error::Degenerate(format!("zero variance at t={t}")));
    }
    Ok((src.covariance(w1, w2, t)? / (v1 * v2).sqrt()).clamp(-1.0, 1.0))
}

/// Correlation of one test across two analysis times: the square root of
/// its information fraction.
pub fn within_test_cor(src: &dyn VarianceSource, w: WeightSpec, t1: f64, t2: f64) -> Result<f64> {
    if t1 > t2 {
        return Err(Error::Domain(format!("need t1 <= t2, got {t1} > {t2}")));
    }
    if t1 == t2 {
        return Ok(1.0);
    }
    let v2 = src.variance(w, t2)?;
    if v2 <= 0.0 {
        return Err(Error::Degenerate(format!("zero variance at the later time {t2}")));
    }
    Ok((src.variance(w, t1)? / v2).sqrt().min(1.0))
}

/// Correlation of different tests at different times: the product of the
/// within-stage correlation at the earlier time with the within-test
/// correlation of the later test, which bridges the pair.
pub fn cross_cor(
    src: &dyn VarianceSource,
    w1: WeightSpec,
    t1: f64,
    w2: WeightSpec,
    t2: f64,
) -> Result<f64> {
    if !(t1 < t2) {
        return Err(Error::Domain(format!("need t1 < t2, got {t1} and {t2}")));
    }
    Ok(within_stage_cor(src, w1, w2, t1)? * within_test_cor(src, w2, t1, t2)?)
}

/// Mean vector and correlation matrix of the stacked statistics, labeled in
/// stage-major order: `(stage 0, weight 0), (stage 0, weight 1), ...`.
#[derive(Debug, Clone, Serialize)]
pub struct GaussianApprox {
    /// (stage index, weight) per coordinate.
    pub labels: Vec<(usize, WeightSpec)>,
    /// Standardized per-subject drift in the rejection frame (positive when
    /// the treatment helps); multiply by sqrt(n) for a trial of n subjects.
    /// All zeros under the null.
    pub drift: Vec<f64>,
    /// Correlation matrix, row-major.
    pub corr: Vec<Vec<f64>>,
    /// Whether the eigenvalue-clipping repair ran.
    pub repaired: bool,
}

impl GaussianApprox {
    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    /// Leading principal block covering the first `stages` stages.
    pub fn leading_block(&self, stages: usize, tests: usize) -> Vec<Vec<f64>> {
        let d = stages * tests;
        (0..d).map(|i| self.corr[i][..d].to_vec()).collect()
    }
}

/// Builds the full matrix from the three correlation types, checks positive
/// semidefiniteness, and repairs tiny indefiniteness by eigenvalue clipping.
pub fn assemble(
    src: &dyn VarianceSource,
    weights: &[WeightSpec],
    times: &[f64],
) -> Result<GaussianApprox> {
    let k = weights.len();
    let m = times.len();
    if k == 0 || m == 0 {
        return Err(Error::Domain("need at least one weight and one time".into()));
    }
    let d = k * m;
    let mut corr = vec![vec![0.0; d]; d];
    let mut labels = Vec::with_capacity(d);
    for (mi, _) in times.iter().enumerate() {
        for &w in weights {
            labels.push((mi, w));
        }
    }
    for i in 0..d {
        corr[i][i] = 1.0;
        for j in (i + 1)..d {
            let (m1, w1) = labels[i];
            let (m2, w2) = labels[j];
            let value = if m1 == m2 {
                within_stage_cor(src, w1, w2, times[m1])?
            } else if w1 == w2 {
                within_test_cor(src, w1, times[m1], times[m2])?
            } else {
                cross_cor(src, w1, times[m1], w2, times[m2])?
            };
            corr[i][j] = value;
            corr[j][i] = value;
        }
    }
    let (corr, repaired) = repair_correlation(corr)?;
    Ok(GaussianApprox { labels, drift: vec![0.0; d], corr, repaired })
}

/// Checks positive semidefiniteness; eigenvalues in `(-1e-8, 0)` are clipped
/// and the matrix renormalized to unit diagonal, anything lower is an error.
pub fn repair_correlation(corr: Vec<Vec<f64>>) -> Result<(Vec<Vec<f64>>, bool)> {
    let (eigvals, eigvecs) = jacobi_eigen(&corr);
    let min = eigvals.iter().cloned().fold(f64::INFINITY, f64::min);
    if min >= 0.0 {
        return Ok((corr, false));
    }
    if min <= -1e-8 {
        return Err(Error::NotPositiveSemiDefinite(min));
    }
    let d = corr.len();
    let mut fixed = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            let mut acc = 0.0;
            for (l, &lam) in eigvals.iter().enumerate() {
                acc += eigvecs[i][l] * lam.max(0.0) * eigvecs[j][l];
            }
            fixed[i][j] = acc;
        }
    }
    let scale: Vec<f64> = (0..d).map(|i| fixed[i][i].sqrt()).collect();
    for i in 0..d {
        for j in 0..d {
            fixed[i][j] /= scale[i] * scale[j];
        }
    }
    Ok((fixed, true))
}

/// Cyclic Jacobi eigendecomposition for small symmetric matrices; returns
/// eigenvalues and the orthogonal matrix of column eigenvectors.
fn jacobi_eigen(m: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut v = vec![vec![0.0; d]; d];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..64 {
        let mut off = 0.0;
        for i in 0..d {
            for j in (i + 1)..d {
                off += a[i][j] * a[i][j];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                if a[p][q].abs() < 1e-18 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..d {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let vals = (0..d).map(|i| a[i][i]).collect();
    (vals, v)
}

/// One pair in a correlation comparison table.
#[derive(Debug, Clone, Serialize)]
pub struct CorrelationRow {
    pub pair: String,
    pub gold: f64,
    pub predicted_stochastic: f64,
    pub predicted_exact: f64,
    pub estimated: f64,
}

/// Table of per-pair correlations by method, with a marker column for
/// predictions more than 0.10 from the gold value.
#[derive(Debug, Clone, Serialize)]
pub struct CorrelationReport {
    pub rows: Vec<CorrelationRow>,
}

impl CorrelationReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("pair,gold,pred_sto,pred_exa,estimated,large_bias\n");
        for r in &self.rows {
            let flag = ((r.predicted_stochastic - r.gold).abs() > 0.10
                || (r.predicted_exact - r.gold).abs() > 0.10) as u8;
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6},{}\n",
                r.pair, r.gold, r.predicted_stochastic, r.predicted_exact, r.estimated, flag
            ));
        }
        out
    }
}
