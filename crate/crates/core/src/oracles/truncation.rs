//! Mean squared error of estimating `P(Y = 1 | x_1..x_p)` by raw
//! frequencies over the first `k` of `p` binary predictors when the truth is
//! `1/2 + sum_j beta x_j / 2^(j+1)` with `x_j` in `{-1, 1}`, from `n = 2^l`
//! observations spread evenly over the cells of the first `k` predictors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationParams {
    pub p: u32,
    /// `log2` of the sample size.
    pub l: u32,
    pub k: u32,
    pub beta: f64,
}

/// Squared bias and variance summed over all `2^p` cells, and the total
/// divided by `2^p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationMse {
    pub bias2: f64,
    pub variance: f64,
    pub average: f64,
}

impl TruncationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k >= 1 && self.k <= self.l && self.l <= self.p) {
            return Err(Error::InvalidInput(format!(
                "need 1 <= k <= l <= p, got k = {}, l = {}, p = {}",
                self.k, self.l, self.p
            )));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidInput(format!("beta = {} not in (0, 1)", self.beta)));
        }
        if self.p > 1000 {
            return Err(Error::InvalidInput("p above 1000 overflows 2^p".into()));
        }
        Ok(())
    }
}

fn pow2(e: i64) -> f64 {
    2f64.powi(e as i32)
}

pub fn truncation_mse(params: &TruncationParams) -> Result<TruncationMse> {
    params.validate()?;
    let (p, l, k) = (params.p as i64, params.l as i64, params.k as i64);
    let b2 = params.beta * params.beta;
    let bias2 = b2 / 3.0 * (pow2(p - 2 * k - 2) - pow2(-p - 2));
    let variance = ((3.0 - b2) * pow2(p + k - l - 2) + b2 * pow2(p - k - l - 2)) / 3.0;
    let average = ((3.0 - b2) * pow2(k - l - 2) + b2 * pow2(-k - l - 2) + b2 * pow2(-2 * k - 2)
        - b2 * pow2(-2 * p - 2))
        / 3.0;
    Ok(TruncationMse {
        bias2,
        variance,
        average,
    })
}

/// `(k, average MSE)` for `k = 1..=l` and the minimizing `k`.
pub fn truncation_argmin(p: u32, l: u32, beta: f64) -> Result<(usize, Vec<(u32, f64)>)> {
    let curve = (1..=l)
        .map(|k| truncation_mse(&TruncationParams { p, l, k, beta }).map(|m| (k, m.average)))
        .collect::<Result<Vec<_>>>()?;
    let best = curve
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|&(k, _)| k as usize)
        .ok_or_else(|| Error::InvalidInput("l must be at least 1".into()))?;
    Ok((best, curve))
}
