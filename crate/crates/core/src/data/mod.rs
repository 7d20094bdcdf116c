//! Categorical datasets: level-encoded response and predictors plus the
//! schema mapping raw tokens to level indices.

mod csv;
mod split;

pub use self::csv::{read_csv, read_csv_with_schema, read_points_with_schema, write_csv, LoadReport};
pub use split::{fold_indices, k_folds, shuffle_split, train_test_split};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::TensorShape;

/// Largest number of distinct levels in one column.
pub const MAX_LEVELS: usize = 1 << 16;

/// A named column and its level tokens; index `v` encodes `levels[v]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub levels: Vec<String>,
}

impl Column {
    pub fn new(name: impl Into<String>, levels: Vec<String>) -> Self {
        Column {
            name: name.into(),
            levels,
        }
    }

    /// Column named `name` with tokens `"1"`, .., `"d"`.
    pub fn numbered(name: impl Into<String>, d: usize) -> Self {
        Column::new(name, (1..=d).map(|v| v.to_string()).collect())
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn encode(&self, token: &str) -> Option<usize> {
        self.levels.iter().position(|l| l == token)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub response: Column,
    pub predictors: Vec<Column>,
}

impl Schema {
    pub fn shape(&self) -> Result<TensorShape> {
        TensorShape::new(
            self.response.level_count(),
            self.predictors.iter().map(Column::level_count).collect(),
        )
    }

    pub fn predictor_position(&self, name: &str) -> Option<usize> {
        self.predictors.iter().position(|c| c.name == name)
    }

    /// Schema restricted to the given predictor columns, in that order.
    pub fn select(&self, columns: &[usize]) -> Schema {
        Schema {
            response: self.response.clone(),
            predictors: columns.iter().map(|&j| self.predictors[j].clone()).collect(),
        }
    }
}

/// `n` observations of a categorical response and `p` categorical
/// predictors, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    dims: Vec<usize>,
    y: Vec<u16>,
    x: Vec<u16>,
}

impl Dataset {
    pub fn new(schema: Schema, y: Vec<usize>, rows: Vec<Vec<usize>>) -> Result<Self> {
        let p = schema.predictors.len();
        let d0 = schema.response.level_count();
        let dims: Vec<usize> = schema.predictors.iter().map(Column::level_count).collect();
        if y.len() != rows.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} responses for {} rows",
                y.len(),
                rows.len()
            )));
        }
        if let Some(c) = std::iter::once(&schema.response)
            .chain(&schema.predictors)
            .find(|c| c.level_count() > MAX_LEVELS)
        {
            return Err(Error::Capacity(format!(
                "column `{}` has {} levels (limit {MAX_LEVELS})",
                c.name,
                c.level_count()
            )));
        }
        let mut x = Vec::with_capacity(rows.len() * p);
        for (i, (row, &yi)) in rows.iter().zip(&y).enumerate() {
            if yi >= d0 {
                return Err(Error::InvalidInput(format!("row {i}: class {yi} >= {d0}")));
            }
            if row.len() != p {
                return Err(Error::ShapeMismatch(format!("row {i} has {} values, expected {p}", row.len())));
            }
            for (j, (&v, &d)) in row.iter().zip(&dims).enumerate() {
                if v >= d {
                    return Err(Error::LevelOutOfRange {
                        predictor: j,
                        level: v,
                        levels: d,
                    });
                }
                x.push(v as u16);
            }
        }
        Ok(Dataset {
            schema,
            dims,
            y: y.into_iter().map(|v| v as u16).collect(),
            x,
        })
    }

    /// Dataset with generated names: predictors `x1..xp` with levels
    /// `"1".."d_j"` and classes `"0".."d0-1"`.
    pub fn from_indices(d0: usize, dims: &[usize], y: Vec<usize>, rows: Vec<Vec<usize>>) -> Result<Self> {
        let schema = Schema {
            response: Column::new("y", (0..d0).map(|c| c.to_string()).collect()),
            predictors: dims
                .iter()
                .enumerate()
                .map(|(j, &d)| Column::numbered(format!("x{}", j + 1), d))
                .collect(),
        };
        Dataset::new(schema, y, rows)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn predictors(&self) -> usize {
        self.dims.len()
    }

    pub fn classes(&self) -> usize {
        self.schema.response.level_count()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn shape(&self) -> Result<TensorShape> {
        TensorShape::new(self.classes(), self.dims.clone())
    }

    pub fn response(&self, i: usize) -> usize {
        self.y[i] as usize
    }

    pub fn responses(&self) -> impl Iterator<Item = usize> + '_ {
        self.y.iter().map(|&v| v as usize)
    }

    pub fn value(&self, i: usize, j: usize) -> usize {
        self.x[i * self.dims.len() + j] as usize
    }

    pub fn row(&self, i: usize) -> &[u16] {
        let p = self.dims.len();
        &self.x[i * p..(i + 1) * p]
    }

    pub fn row_usize(&self, i: usize) -> Vec<usize> {
        self.row(i).iter().map(|&v| v as usize).collect()
    }

    pub fn column(&self, j: usize) -> Vec<u16> {
        let p = self.dims.len();
        self.x.iter().skip(j).step_by(p.max(1)).copied().collect()
    }

    /// Rows `indices`, in that order, sharing this schema.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let p = self.dims.len();
        let mut x = Vec::with_capacity(indices.len() * p);
        for &i in indices {
            x.extend_from_slice(self.row(i));
        }
        Dataset {
            schema: self.schema.clone(),
            dims: self.dims.clone(),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            x,
        }
    }

    /// Projection onto predictor columns `columns`, in that order.
    pub fn select_columns(&self, columns: &[usize]) -> Dataset {
        let mut x = Vec::with_capacity(self.len() * columns.len());
        for i in 0..self.len() {
            let row = self.row(i);
            x.extend(columns.iter().map(|&j| row[j]));
        }
        Dataset {
            schema: self.schema.select(columns),
            dims: columns.iter().map(|&j| self.dims[j]).collect(),
            y: self.y.clone(),
            x,
        }
    }

    /// Decodes row `i` back to raw tokens: response first, then predictors.
    pub fn tokens(&self, i: usize) -> (&str, Vec<&str>) {
        let y = &self.schema.response.levels[self.response(i)];
        let xs = self
            .row(i)
            .iter()
            .zip(&self.schema.predictors)
            .map(|(&v, c)| c.levels[v as usize].as_str())
            .collect();
        (y, xs)
    }

    /// Concatenates rows of datasets sharing a schema.
    pub fn concat(parts: &[&Dataset]) -> Result<Dataset> {
        let first = parts.first().ok_or_else(|| Error::Empty("no datasets to concatenate".into()))?;
        let mut out = (*first).clone();
        for d in &parts[1..] {
            if d.schema != first.schema {
                return Err(Error::ShapeMismatch("datasets have different schemas".into()));
            }
            out.y.extend_from_slice(&d.y);
            out.x.extend_from_slice(&d.x);
        }
        Ok(out)
    }

    /// Empirical class frequencies.
    pub fn class_frequencies(&self) -> Vec<f64> {
        let mut f = vec![0.0; self.classes()];
        for y in self.responses() {
            f[y] += 1.0;
        }
        let n = self.len().max(1) as f64;
        f.iter_mut().for_each(|v| *v /= n);
        f
    }
}
