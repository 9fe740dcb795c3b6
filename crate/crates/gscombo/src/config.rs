//! Text configuration for designs and simulation scenarios.
//!
//! Designs are described by a flat key-value file (TOML): the delayed-effect
//! model (`lambda`, `theta`, `eps`), the trial frame (`R`, `tau`, `p`), the
//! testing plan (`combo`, `nu`, `monitor_weight`, `alpha`, `beta`,
//! `spending`), and solver controls (`b`, `source`, `mvn`). Scenario files
//! add the replication plan (`hypothesis`, `reps`, `seed`) and optional
//! `true_*` keys for the generation law when it deviates from the design
//! assumptions.

use serde::{Deserialize, Serialize};

use crate::design::{DesignSpec, MonitorRule, MvnSettings, SourceKind, SpendingFamily};
use crate::error::{Error, Result};
use crate::predict::stochastic::Hypothesis;
use crate::sim::Scenario;
use crate::survival::{AccrualCensoring, AccrualProfile, TwoArmModel};
use crate::weight::WeightSpec;

fn default_b() -> u32 {
    30
}

fn default_monitor() -> usize {
    0
}

fn default_source() -> SourceKind {
    SourceKind::PredSto
}

/// Design configuration file contents.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignConfig {
    pub lambda: f64,
    pub theta: f64,
    #[serde(default)]
    pub eps: f64,
    #[serde(rename = "R")]
    pub accrual_duration: f64,
    pub tau: f64,
    pub p: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Fleming-Harrington pairs, e.g. `[[0, 0], [0, 1]]`.
    pub combo: Vec<[f64; 2]>,
    /// Stage information fractions ending at 1.
    pub nu: Vec<f64>,
    #[serde(default = "default_monitor")]
    pub monitor_weight: usize,
    #[serde(default)]
    pub spending: SpendingFamily,
    #[serde(default = "default_b")]
    pub b: u32,
    #[serde(default = "default_source")]
    pub source: SourceKind,
    #[serde(default)]
    pub mvn: MvnSettings,
}

impl DesignConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn to_spec(&self) -> Result<DesignSpec> {
        let model = TwoArmModel::two_piece(self.lambda, self.theta, self.eps, self.p)?;
        let ac = AccrualCensoring::uniform(self.accrual_duration, self.tau)?;
        let combo = self
            .combo
            .iter()
            .map(|&[rho, gamma]| WeightSpec::new(rho, gamma))
            .collect::<Result<Vec<_>>>()?;
        let monitor = match combo.get(self.monitor_weight) {
            Some(w) if *w == WeightSpec::log_rank() => MonitorRule::SurrogateEvents,
            Some(_) => MonitorRule::Information(self.monitor_weight),
            None => {
                return Err(Error::Config(format!(
                    "monitor_weight {} outside the combo of {} tests",
                    self.monitor_weight,
                    combo.len()
                )))
            }
        };
        let spec = DesignSpec {
            model,
            ac,
            combo,
            stage_fractions: self.nu.clone(),
            monitor,
            alpha: self.alpha,
            beta: self.beta,
            spending: self.spending,
            b: self.b,
            source: self.source,
            mvn: self.mvn,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Scenario configuration: a design plus the truth and replication plan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(flatten)]
    pub design: DesignConfig,
    /// "H0" or "H1".
    pub hypothesis: String,
    pub reps: u64,
    pub seed: u64,
    /// True control hazard when the design's `lambda` is misspecified.
    #[serde(default)]
    pub true_lambda: Option<f64>,
    /// True post-delay hazard ratio.
    #[serde(default)]
    pub true_theta: Option<f64>,
    /// True delay time.
    #[serde(default)]
    pub true_eps: Option<f64>,
    /// True relative accrual rates per month when enrollment is not uniform.
    #[serde(default)]
    pub true_accrual: Option<Vec<f64>>,
    /// True yearly dropout proportions `[control, treatment]`.
    #[serde(default)]
    pub true_censor_yearly: Option<[f64; 2]>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn hypothesis(&self) -> Result<Hypothesis> {
        match self.hypothesis.as_str() {
            "H0" | "h0" | "null" => Ok(Hypothesis::Null),
            "H1" | "h1" | "alternative" => Ok(Hypothesis::Alternative),
            other => Err(Error::Config(format!(
                "hypothesis must be H0 or H1, got '{other}'"
            ))),
        }
    }

    /// Builds the scenario: solves the design under the assumed inputs and
    /// attaches the (possibly violated) generation law.
    pub fn to_scenario(&self) -> Result<Scenario> {
        let spec = self.design.to_spec()?;
        let true_model = TwoArmModel::two_piece(
            self.true_lambda.unwrap_or(self.design.lambda),
            self.true_theta.unwrap_or(self.design.theta),
            self.true_eps.unwrap_or(self.design.eps),
            self.design.p,
        )?;
        let profile = match &self.true_accrual {
            None => AccrualProfile::Uniform,
            Some(rates) => AccrualProfile::Piecewise(rates.clone()),
        };
        let censor = match self.true_censor_yearly {
            None => [0.0, 0.0],
            Some([c0, c1]) => [
                crate::survival::yearly_censor_proportion_to_rate(c0)?,
                crate::survival::yearly_censor_proportion_to_rate(c1)?,
            ],
        };
        let true_ac = AccrualCensoring::new(
            self.design.accrual_duration,
            self.design.tau,
            profile,
            censor,
        )?;
        let mut scenario =
            Scenario::faithful(spec, self.hypothesis()?, self.reps, self.seed)?;
        scenario.true_model = true_model;
        scenario.true_ac = true_ac;
        Ok(scenario)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DESIGN: &str = r#"
lambda = 0.1155245300933242
theta = 0.7
eps = 2.0
R = 14.0
tau = 18.0
p = 0.5
alpha = 0.025
beta = 0.1
combo = [[0.0, 0.0], [0.0, 1.0]]
nu = [0.6, 1.0]
spending = { family = "power", param = 3.12 }
mvn = { accuracy = 1e-5, seed = 20240801, replicates = 5 }
"#;

    #[test]
    fn parses_design_config() {
        let cfg = DesignConfig::from_toml(DESIGN).unwrap();
        let spec = cfg.to_spec().unwrap();
        assert_eq!(spec.combo.len(), 2);
        assert_eq!(spec.b, 30);
        assert_eq!(spec.source, SourceKind::PredSto);
        assert_eq!(spec.stage_fractions, vec![0.6, 1.0]);
    }

    #[test]
    fn missing_key_is_named() {
        let broken = DESIGN.replace("alpha = 0.025\n", "");
        let err = DesignConfig::from_toml(&broken).unwrap_err();
        match err {
            Error::Config(msg) => assert!(msg.contains("alpha"), "message: {msg}"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn scenario_with_violations() {
        let text = format!(
            "{DESIGN}\nhypothesis = \"H0\"\nreps = 50\nseed = 7\ntrue_accrual = [1,2,3,4,6,6,6,6,6,6,6,6,6,6]\ntrue_censor_yearly = [0.1, 0.2]\n"
        );
        let cfg = ScenarioConfig::from_toml(&text).unwrap();
        assert_eq!(cfg.reps, 50);
        assert!(cfg.true_accrual.is_some());
        let sc = cfg.to_scenario().unwrap();
        assert!(sc.true_ac.has_random_censoring());
        assert!(sc.true_ac.accrual_cdf(4.0) < 4.0 / 14.0);
    }

    #[test]
    fn bad_hypothesis_is_rejected() {
        let text = format!("{DESIGN}\nhypothesis = \"maybe\"\nreps = 5\nseed = 1\n");
        let cfg = ScenarioConfig::from_toml(&text).unwrap();
        assert!(cfg.hypothesis().is_err());
    }
}
