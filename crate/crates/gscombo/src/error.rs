use thiserror::Error;

/// Errors produced by design, prediction, estimation and simulation routines.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument is outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A statistic or design quantity carries no information (zero variance,
    /// zero events, no effect). Callers must distinguish this from "no
    /// evidence".
    #[error("degenerate: {0}")]
    Degenerate(String),

    /// Non-integer Fleming-Harrington parameters requested from the
    /// closed-form predictor.
    #[error("unsupported weight: exact prediction needs integer exponents, got rho={rho}, gamma={gamma}")]
    UnsupportedWeight { rho: f64, gamma: f64 },

    /// A monitoring target cannot be reached before the horizon cap.
    #[error("infeasible stage: {0}")]
    InfeasibleStage(String),

    /// The design has no treatment effect, so no finite sample size exists.
    #[error("no effect: the drift is zero, sample size is unbounded")]
    NoEffect,

    /// An assembled correlation matrix is too indefinite to repair.
    #[error("inconsistent correlation inputs: smallest eigenvalue {0:e} below repair threshold")]
    NotPositiveSemiDefinite(f64),

    /// A root-finding bracket failed or an iteration cap was hit.
    #[error("solver failure: {0}")]
    Solver(String),

    /// Configuration file problems; the string names the offending key.
    #[error("config error: {0}")]
    Config(String),

    /// Dataset parsing problems.
    #[error("dataset error: {0}")]
    Dataset(String),
}

pub type Result<T> = std::result::Result<T, Error>;
