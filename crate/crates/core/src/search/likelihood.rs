//! Marginal likelihood of the responses under a hard clustering of every
//! predictor's levels.
//!
//! With `pi` forced to 0/1, observations fall into cells indexed by the
//! blocks of the included predictors, and the core vector of each cell
//! integrates out against its class counts. For concentration `a` per class
//! and `d0` classes a cell with counts `c` contributes
//!
//! ```text
//! S(c) = ln G(d0 a) - d0 ln G(a) + sum_y ln G(a + c_y) - ln G(d0 a + sum_y c_y)
//! ```
//!
//! and an empty cell contributes exactly zero.

use std::collections::BTreeMap;

use libm::lgamma;

use super::partition::Partition;
use crate::data::Dataset;
use crate::error::{Error, Result};

/// `ln L(y | k, A)`, computed from scratch. `clustering[j]` is the partition
/// of predictor `j`'s levels; predictors with one block are excluded.
pub fn log_marginal_likelihood(data: &Dataset, clustering: &[Partition], a: f64) -> Result<f64> {
    if clustering.len() != data.predictors() {
        return Err(Error::ShapeMismatch(format!(
            "{} partitions for {} predictors",
            clustering.len(),
            data.predictors()
        )));
    }
    for (j, part) in clustering.iter().enumerate() {
        if part.levels() != data.dims()[j] {
            return Err(Error::ShapeMismatch(format!(
                "partition of predictor {j} covers {} levels, predictor has {}",
                part.levels(),
                data.dims()[j]
            )));
        }
    }
    let d0 = data.classes();
    let included: Vec<usize> = (0..clustering.len()).filter(|&j| clustering[j].block_count() > 1).collect();
    let mut cells: BTreeMap<Vec<u16>, Vec<u32>> = BTreeMap::new();
    for i in 0..data.len() {
        let key: Vec<u16> = included
            .iter()
            .map(|&j| clustering[j].label(data.value(i, j)) as u16)
            .collect();
        cells.entry(key).or_insert_with(|| vec![0; d0])[data.response(i)] += 1;
    }
    let scorer = CellScore::new(d0, a, data.len());
    Ok(cells.values().map(|c| scorer.score(c)).sum())
}

/// Tabulated `S(c)` for counts up to `n`.
#[derive(Debug, Clone)]
pub(crate) struct CellScore {
    constant: f64,
    /// `ln G(a + c)`
    per_class: Vec<f64>,
    /// `ln G(d0 a + c)`
    total: Vec<f64>,
}

impl CellScore {
    pub(crate) fn new(d0: usize, a: f64, n: usize) -> Self {
        let big = d0 as f64 * a;
        CellScore {
            constant: lgamma(big) - d0 as f64 * lgamma(a),
            per_class: (0..=n).map(|c| lgamma(a + c as f64)).collect(),
            total: (0..=n).map(|c| lgamma(big + c as f64)).collect(),
        }
    }

    pub(crate) fn score(&self, counts: &[u32]) -> f64 {
        let n: u32 = counts.iter().sum();
        if n == 0 {
            return 0.0;
        }
        self.constant + counts.iter().map(|&c| self.per_class[c as usize]).sum::<f64>() - self.total[n as usize]
    }
}
