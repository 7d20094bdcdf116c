//! Synthetic binary-response data in which only a few predictors matter.
//!
//! `P(Y = 1 | x)` depends on the relevant predictors alone and is drawn
//! independently for every combination of their levels as `f(U)` with
//! `U ~ Uniform(0, 1)` and `f(u) = u^2 / (u^2 + (1 - u)^2)`. Predictors are
//! independent and uniform over their levels.

use rand::Rng;

use crate::data::{Dataset, Schema};
use crate::error::{Error, Result};
use crate::tensor::{ConditionalModel, TensorShape};

/// 0-based positions of the three relevant predictors in the reference
/// setup.
pub const DEFAULT_RELEVANT: [usize; 3] = [8, 10, 12];

/// `u^2 / (u^2 + (1 - u)^2)`.
pub fn link(u: f64) -> f64 {
    let (a, b) = (u * u, (1.0 - u) * (1.0 - u));
    a / (a + b)
}

/// Monte Carlo estimate of `E[min(f(U), 1 - f(U))]`, the Bayes error when
/// every relevant cell is equally likely.
pub fn bayes_error_mc<R: Rng + ?Sized>(rng: &mut R, draws: usize) -> f64 {
    let total: f64 = (0..draws)
        .map(|_| {
            let f = link(rng.random::<f64>());
            f.min(1.0 - f)
        })
        .sum();
    total / draws.max(1) as f64
}

/// The generating law: level counts, relevant predictors and the table of
/// `P(Y = 1 | relevant levels)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTruth {
    shape: TensorShape,
    relevant: Vec<usize>,
    /// Flat over the relevant predictors' levels, last fastest.
    table: Vec<f64>,
}

impl SyntheticTruth {
    pub fn new(dims: Vec<usize>, relevant: Vec<usize>, table: Vec<f64>) -> Result<Self> {
        let shape = TensorShape::new(2, dims)?;
        let p = shape.predictors();
        for (t, &j) in relevant.iter().enumerate() {
            if j >= p || relevant[..t].contains(&j) {
                return Err(Error::InvalidInput(format!(
                    "relevant predictor {j} is out of range or repeated (p = {p})"
                )));
            }
        }
        let cells: usize = relevant.iter().map(|&j| shape.dims()[j]).product();
        if table.len() != cells {
            return Err(Error::ShapeMismatch(format!("table has {} entries, expected {cells}", table.len())));
        }
        if table.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Validation("table entries must lie in [0, 1]".into()));
        }
        Ok(SyntheticTruth { shape, relevant, table })
    }

    /// Draws the table; `p` predictors with `d` levels each.
    pub fn generate<R: Rng + ?Sized>(rng: &mut R, p: usize, d: usize, relevant: &[usize]) -> Result<Self> {
        let cells = relevant
            .iter()
            .try_fold(1usize, |acc, _| acc.checked_mul(d))
            .filter(|&c| c <= 1 << 24)
            .ok_or_else(|| Error::Capacity("too many relevant cells".into()))?;
        let table = (0..cells).map(|_| link(rng.random::<f64>())).collect();
        SyntheticTruth::new(vec![d; p], relevant.to_vec(), table)
    }

    pub fn shape(&self) -> &TensorShape {
        &self.shape
    }

    pub fn relevant(&self) -> &[usize] {
        &self.relevant
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    fn cell(&self, x: &[usize]) -> usize {
        self.relevant
            .iter()
            .fold(0, |acc, &j| acc * self.shape.dims()[j] + x[j])
    }

    /// `P(Y = 1 | x)`.
    pub fn prob_one(&self, x: &[usize]) -> Result<f64> {
        self.shape.check_point(x)?;
        Ok(self.table[self.cell(x)])
    }

    /// `n` rows with uniform predictors and Bernoulli responses.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<Dataset> {
        let dims = self.shape.dims();
        let mut rows = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<usize> = dims.iter().map(|&d| rng.random_range(0..d)).collect();
            y.push(usize::from(rng.random::<f64>() < self.table[self.cell(&row)]));
            rows.push(row);
        }
        Dataset::from_indices(2, dims, y, rows)
    }

    /// The same law re-indexed to a schema loaded from files written by
    /// [`Dataset::from_indices`] naming: predictors `x1..xp` with tokens
    /// `"1".."d"` and classes `"0"`, `"1"`. Columns may be missing (dropped
    /// as constant) or reordered, and levels may appear in any order, but a
    /// relevant predictor must be present.
    pub fn aligned_to(&self, schema: &Schema) -> Result<SyntheticTruth> {
        let resp = &schema.response.levels;
        let flip = match (resp.first().map(String::as_str), resp.get(1).map(String::as_str), resp.len()) {
            (Some("0"), Some("1"), 2) => false,
            (Some("1"), Some("0"), 2) => true,
            _ => return Err(Error::ShapeMismatch(format!("response levels {resp:?} are not 0/1"))),
        };
        let dims = self.shape.dims();
        // source[s] = (truth predictor, truth level of each schema level)
        let mut source = Vec::with_capacity(schema.predictors.len());
        for col in &schema.predictors {
            let j = col
                .name
                .strip_prefix('x')
                .and_then(|t| t.parse::<usize>().ok())
                .filter(|&j| (1..=dims.len()).contains(&j))
                .ok_or_else(|| Error::ShapeMismatch(format!("column `{}` is not a generated predictor", col.name)))?
                - 1;
            let levels = col
                .levels
                .iter()
                .map(|t| {
                    t.parse::<usize>()
                        .ok()
                        .filter(|&v| (1..=dims[j]).contains(&v))
                        .map(|v| v - 1)
                        .ok_or_else(|| Error::ShapeMismatch(format!("column `{}`: unexpected level `{t}`", col.name)))
                })
                .collect::<Result<Vec<_>>>()?;
            source.push((j, levels));
        }
        let relevant = self
            .relevant
            .iter()
            .map(|&j| {
                source
                    .iter()
                    .position(|(src, _)| *src == j)
                    .ok_or_else(|| Error::MissingColumn(format!("x{}", j + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        let new_dims: Vec<usize> = source.iter().map(|(_, l)| l.len()).collect();
        let cells: usize = relevant.iter().map(|&s| new_dims[s]).product();
        let mut x = vec![0usize; dims.len()];
        let mut h = vec![0usize; relevant.len()];
        let mut table = Vec::with_capacity(cells);
        for _ in 0..cells {
            for (t, &s) in relevant.iter().enumerate() {
                x[source[s].0] = source[s].1[h[t]];
            }
            let f = self.table[self.cell(&x)];
            table.push(if flip { 1.0 - f } else { f });
            for t in (0..h.len()).rev() {
                h[t] += 1;
                if h[t] < new_dims[relevant[t]] {
                    break;
                }
                h[t] = 0;
            }
        }
        SyntheticTruth::new(new_dims, relevant, table)
    }

    /// Bayes error under uniform predictors, `mean_cells min(f, 1 - f)`.
    pub fn bayes_error(&self) -> f64 {
        self.table.iter().map(|&f| f.min(1.0 - f)).sum::<f64>() / self.table.len() as f64
    }
}

impl ConditionalModel for SyntheticTruth {
    fn shape(&self) -> &TensorShape {
        &self.shape
    }

    fn conditional_into(&self, x: &[usize], out: &mut [f64]) -> Result<()> {
        let f = self.prob_one(x)?;
        out[0] = 1.0 - f;
        out[1] = f;
        Ok(())
    }
}
