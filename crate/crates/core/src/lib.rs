//! Bayesian classification from many categorical predictors.

pub mod archive;
pub mod data;
pub mod error;
pub mod gibbs;
pub mod oracles;
pub mod pipeline;
pub mod predict;
pub mod priors;
pub mod search;
pub mod tensor;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
