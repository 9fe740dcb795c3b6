//! Distribution-based prediction of weighted log-rank statistics, by the
//! discretized marching scheme or by closed forms for the delayed-effect
//! model.

pub mod exact;
pub mod stochastic;
