//! Simulation-free group sequential designs for maxcombo tests.
//!
//! The crate predicts the joint distribution of several Fleming-Harrington
//! weighted log-rank statistics across interim analyses, assembles their
//! correlation matrix, solves error-spending boundaries and sample sizes
//! through multivariate normal rectangle probabilities, and verifies the
//! resulting operating characteristics with a built-in Monte Carlo trial
//! simulator.

pub mod config;
pub mod correlation;
pub mod design;
pub mod error;
pub mod mvn;
pub mod predict;
pub mod sim;
pub mod survival;
pub mod weight;
pub mod wlrt;

pub use error::{Error, Result};
pub use weight::WeightSpec;
