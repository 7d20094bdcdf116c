//! Risk of shrinking per-level frequency estimates toward each other.
//!
//! For `m` levels with true probabilities `P_j`, `n_j` observations each and
//! raw frequencies `P^_j`, the estimate
//! `P~_j = (1 - (m-1) c) P^_j + c sum_{i != j} P^_i` has summed squared-error
//! risk `V - 2 (m-1) V c + c^2 ((m-1) m V + m D)`, where
//! `V = sum_j P_j (1 - P_j) / n_j` and `D = sum_{i<j} (P_i - P_j)^2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageParams {
    pub probs: Vec<f64>,
    pub counts: Vec<u64>,
}

impl ShrinkageParams {
    fn check(&self) -> Result<(f64, f64, f64)> {
        let m = self.probs.len();
        if m < 2 || self.counts.len() != m {
            return Err(Error::InvalidInput(format!(
                "need at least two levels with one count each, got {} probabilities and {} counts",
                m,
                self.counts.len()
            )));
        }
        if self.counts.contains(&0) {
            return Err(Error::InvalidInput("every level needs at least one observation".into()));
        }
        if self.probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidInput("probabilities must lie in [0, 1]".into()));
        }
        let v = self
            .probs
            .iter()
            .zip(&self.counts)
            .map(|(&p, &n)| p * (1.0 - p) / n as f64)
            .sum();
        let mut d = 0.0;
        for i in 0..m {
            for j in i + 1..m {
                d += (self.probs[i] - self.probs[j]).powi(2);
            }
        }
        Ok((m as f64, v, d))
    }

    /// Risk of the unshrunk frequencies, `sum_j P_j (1 - P_j) / n_j`.
    pub fn raw_risk(&self) -> Result<f64> {
        self.check().map(|(_, v, _)| v)
    }
}

/// Risk at shrinkage weight `c`, `0 <= c <= 1/(m-1)`.
pub fn shrinkage_risk(params: &ShrinkageParams, c: f64) -> Result<f64> {
    let (m, v, d) = params.check()?;
    if !(0.0..=1.0 / (m - 1.0)).contains(&c) {
        return Err(Error::InvalidInput(format!("c = {c} outside [0, 1/(m-1)]")));
    }
    Ok(v - 2.0 * (m - 1.0) * v * c + c * c * ((m - 1.0) * m * v + m * d))
}

/// `c0 = (1/m) V / (V + D/(m-1))`, the minimizer of [`shrinkage_risk`].
pub fn optimal_c(params: &ShrinkageParams) -> Result<f64> {
    let (m, v, d) = params.check()?;
    if v == 0.0 && d == 0.0 {
        return Err(Error::Degenerate("risk is identically zero".into()));
    }
    Ok(v / (v + d / (m - 1.0)) / m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(probs: &[f64], counts: &[u64]) -> ShrinkageParams {
        ShrinkageParams {
            probs: probs.to_vec(),
            counts: counts.to_vec(),
        }
    }

    #[test]
    fn equal_probabilities() {
        let s = params(&[0.3; 4], &[5, 8, 3, 10]);
        let c0 = optimal_c(&s).unwrap();
        assert!((c0 - 0.25).abs() < 1e-15);
        let raw = s.raw_risk().unwrap();
        assert!((shrinkage_risk(&s, c0).unwrap() - raw / 4.0).abs() < 1e-15);
    }

    #[test]
    fn no_shrinkage_is_raw_risk() {
        let s = params(&[0.2, 0.5, 0.8], &[10, 10, 10]);
        assert_eq!(shrinkage_risk(&s, 0.0).unwrap(), 0.2 * 0.8 / 10.0 * 2.0 + 0.025);
    }

    #[test]
    fn c0_minimizes_on_a_grid() {
        let s = params(&[0.1, 0.45, 0.5, 0.9], &[3, 7, 2, 12]);
        let c0 = optimal_c(&s).unwrap();
        assert!(c0 > 0.0 && c0 < 1.0 / 3.0);
        let best = shrinkage_risk(&s, c0).unwrap();
        for t in 0..=1000 {
            let c = t as f64 / 3000.0;
            assert!(best <= shrinkage_risk(&s, c).unwrap() + 1e-15);
        }
    }

    #[test]
    fn minimum_lies_between_a_mth_and_the_raw_risk() {
        let s = params(&[0.2, 0.5, 0.8], &[10, 10, 10]);
        let raw = s.raw_risk().unwrap();
        let best = shrinkage_risk(&s, optimal_c(&s).unwrap()).unwrap();
        assert!(best > raw / 3.0 && best < raw);
    }

    #[test]
    fn zero_count_is_an_error() {
        assert!(optimal_c(&params(&[0.2, 0.5], &[3, 0])).is_err());
        assert!(shrinkage_risk(&params(&[0.2, 0.5], &[3, 1]), 1.5).is_err());
    }
}
