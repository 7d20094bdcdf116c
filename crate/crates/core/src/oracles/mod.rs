//! Closed-form results used as test oracles and study tools, and the
//! synthetic data generator.

mod shrinkage;
mod synthetic;
mod truncation;

pub use shrinkage::{optimal_c, shrinkage_risk, ShrinkageParams};
pub use synthetic::{bayes_error_mc, link, SyntheticTruth, DEFAULT_RELEVANT};
pub use truncation::{truncation_argmin, truncation_mse, TruncationMse, TruncationParams};
