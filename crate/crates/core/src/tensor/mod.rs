//! Conditional probability tensors and their Tucker-style factorization.
//!
//! A conditional probability tensor assigns a probability vector over the
//! `d0` response classes to every combination `x = (x_1, .., x_p)` of
//! predictor levels. The factorized form is
//!
//! ```text
//! P(y | x) = sum_{h_1..h_p} lambda_{h_1..h_p}(y) * prod_j pi^(j)_{h_j}(x_j)
//! ```
//!
//! with a core tensor of class-probability vectors and one row-stochastic
//! mixer matrix (`d_j x k_j`) per predictor. A predictor with `k_j = 1` has
//! a trivial mixer and cannot influence the output, so the core is stored
//! only over the predictors with `k_j > 1`.
//!
//! All level and class indices are zero-based.

mod decompose;
mod distance;

pub use decompose::decompose;
pub use distance::{nested_submodel, parameter_distance_bound, truncation_distance_bound, tv_distance};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for simplex constraints.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Largest dense grid (cells over all predictor combinations, or core cells)
/// that will be materialized.
pub const DENSE_CELL_LIMIT: usize = 1_000_000;

/// Number of response classes plus the level count of every predictor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ShapeRepr", into = "ShapeRepr")]
pub struct TensorShape {
    d0: usize,
    dims: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct ShapeRepr {
    classes: usize,
    levels: Vec<usize>,
}

impl TryFrom<ShapeRepr> for TensorShape {
    type Error = Error;
    fn try_from(r: ShapeRepr) -> Result<Self> {
        TensorShape::new(r.classes, r.levels)
    }
}

impl From<TensorShape> for ShapeRepr {
    fn from(s: TensorShape) -> Self {
        ShapeRepr {
            classes: s.d0,
            levels: s.dims,
        }
    }
}

impl TensorShape {
    pub fn new(d0: usize, dims: Vec<usize>) -> Result<Self> {
        if d0 < 2 {
            return Err(Error::Validation(format!("need at least 2 classes, got {d0}")));
        }
        if let Some((j, &d)) = dims.iter().enumerate().find(|(_, &d)| d < 2) {
            return Err(Error::Validation(format!(
                "predictor {j} has {d} levels; at least 2 required"
            )));
        }
        Ok(TensorShape { d0, dims })
    }

    pub fn classes(&self) -> usize {
        self.d0
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn predictors(&self) -> usize {
        self.dims.len()
    }

    /// Number of predictor combinations, `None` on overflow.
    pub fn cell_count(&self) -> Option<usize> {
        self.dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
    }

    pub fn check_point(&self, x: &[usize]) -> Result<()> {
        if x.len() != self.dims.len() {
            return Err(Error::ShapeMismatch(format!(
                "point has {} coordinates, shape has {} predictors",
                x.len(),
                self.dims.len()
            )));
        }
        for (j, (&v, &d)) in x.iter().zip(&self.dims).enumerate() {
            if v >= d {
                return Err(Error::LevelOutOfRange {
                    predictor: j,
                    level: v,
                    levels: d,
                });
            }
        }
        Ok(())
    }

    /// Flat index of `x` with the last predictor varying fastest.
    pub fn flat_index(&self, x: &[usize]) -> usize {
        x.iter().zip(&self.dims).fold(0, |acc, (&v, &d)| acc * d + v)
    }

    /// Inverse of [`TensorShape::flat_index`].
    pub fn unflatten(&self, mut index: usize, x: &mut [usize]) {
        for (slot, &d) in x.iter_mut().zip(&self.dims).rev() {
            *slot = index % d;
            index /= d;
        }
    }

    /// All predictor combinations in flat order. Panics if the grid exceeds
    /// [`DENSE_CELL_LIMIT`]; intended for small shapes.
    pub fn grid(&self) -> Vec<Vec<usize>> {
        let cells = self.cell_count().filter(|&c| c <= DENSE_CELL_LIMIT);
        let cells = cells.expect("grid too large to enumerate");
        let mut x = vec![0; self.predictors()];
        (0..cells)
            .map(|c| {
                self.unflatten(c, &mut x);
                x.clone()
            })
            .collect()
    }
}

/// Anything that yields `P(. | x)` for points of a fixed shape.
pub trait ConditionalModel {
    fn shape(&self) -> &TensorShape;

    /// Writes the class-probability vector at `x` into `out` (length `d0`).
    fn conditional_into(&self, x: &[usize], out: &mut [f64]) -> Result<()>;

    fn conditional(&self, x: &[usize]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.shape().classes()];
        self.conditional_into(x, &mut out)?;
        Ok(out)
    }
}

/// Dense conditional probability tensor, one simplex vector per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalTensor {
    shape: TensorShape,
    probs: Vec<f64>,
}

impl ConditionalTensor {
    /// `probs` holds `d0` entries per cell, cells in flat order.
    pub fn new(shape: TensorShape, probs: Vec<f64>) -> Result<Self> {
        let cells = dense_cells(&shape)?;
        let d0 = shape.classes();
        if probs.len() != cells * d0 {
            return Err(Error::ShapeMismatch(format!(
                "expected {} probabilities, got {}",
                cells * d0,
                probs.len()
            )));
        }
        for (c, row) in probs.chunks_exact(d0).enumerate() {
            check_simplex(row).map_err(|e| Error::Validation(format!("cell {c}: {e}")))?;
        }
        Ok(ConditionalTensor { shape, probs })
    }

    pub fn from_fn(shape: TensorShape, mut f: impl FnMut(&[usize]) -> Vec<f64>) -> Result<Self> {
        let cells = dense_cells(&shape)?;
        let mut probs = Vec::with_capacity(cells * shape.classes());
        let mut x = vec![0; shape.predictors()];
        for c in 0..cells {
            shape.unflatten(c, &mut x);
            probs.extend(f(&x));
        }
        Self::new(shape, probs)
    }

    pub fn shape(&self) -> &TensorShape {
        &self.shape
    }

    pub fn cell(&self, x: &[usize]) -> &[f64] {
        let d0 = self.shape.classes();
        let c = self.shape.flat_index(x);
        &self.probs[c * d0..(c + 1) * d0]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

impl ConditionalModel for ConditionalTensor {
    fn shape(&self) -> &TensorShape {
        &self.shape
    }

    fn conditional_into(&self, x: &[usize], out: &mut [f64]) -> Result<()> {
        self.shape.check_point(x)?;
        out.copy_from_slice(self.cell(x));
        Ok(())
    }
}

fn dense_cells(shape: &TensorShape) -> Result<usize> {
    shape
        .cell_count()
        .filter(|&c| c <= DENSE_CELL_LIMIT)
        .ok_or_else(|| {
            Error::Capacity(format!(
                "dense tensor over {:?} exceeds {DENSE_CELL_LIMIT} cells",
                shape.dims()
            ))
        })
}

pub(crate) fn check_simplex(v: &[f64]) -> std::result::Result<(), String> {
    let mut sum = 0.0;
    for &p in v {
        if !(0.0..=1.0).contains(&p) {
            return Err(format!("entry {p} outside [0, 1]"));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > SIMPLEX_TOL * v.len().max(1) as f64 {
        return Err(format!("entries sum to {sum}"));
    }
    Ok(())
}

/// Latent-class counts `k_j` per predictor; `k_j = 1` excludes predictor `j`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelIndex(Vec<usize>);

impl ModelIndex {
    pub fn new(k: Vec<usize>, shape: &TensorShape) -> Result<Self> {
        if k.len() != shape.predictors() {
            return Err(Error::ShapeMismatch(format!(
                "model index has {} entries, shape has {} predictors",
                k.len(),
                shape.predictors()
            )));
        }
        for (j, (&kj, &dj)) in k.iter().zip(shape.dims()).enumerate() {
            if kj < 1 || kj > dj {
                return Err(Error::Validation(format!(
                    "k[{j}] = {kj} outside 1..={dj}"
                )));
            }
        }
        Ok(ModelIndex(k))
    }

    /// All predictors excluded.
    pub fn null(p: usize) -> Self {
        ModelIndex(vec![1; p])
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Predictors with `k_j > 1`, ascending.
    pub fn included(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&j| self.0[j] > 1).collect()
    }

    pub fn included_count(&self) -> usize {
        self.0.iter().filter(|&&k| k > 1).count()
    }
}

/// Row-stochastic `levels x classes` matrix; row `v` is the soft assignment
/// of level `v` to latent classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Mixer {
    levels: usize,
    classes: usize,
    weights: Vec<f64>,
}

impl TryFrom<Vec<Vec<f64>>> for Mixer {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Mixer::from_rows(rows)
    }
}

impl From<Mixer> for Vec<Vec<f64>> {
    fn from(m: Mixer) -> Self {
        m.weights.chunks_exact(m.classes).map(<[f64]>::to_vec).collect()
    }
}

impl Mixer {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let classes = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || classes == 0 {
            return Err(Error::Validation("mixer needs at least one row and column".into()));
        }
        let levels = rows.len();
        let mut weights = Vec::with_capacity(levels * classes);
        for (v, row) in rows.into_iter().enumerate() {
            if row.len() != classes {
                return Err(Error::Validation(format!("mixer row {v} is ragged")));
            }
            check_simplex(&row).map_err(|e| Error::Validation(format!("mixer row {v}: {e}")))?;
            weights.extend(row);
        }
        Ok(Mixer {
            levels,
            classes,
            weights,
        })
    }

    /// Single latent class: every row is `(1.0)`.
    pub fn trivial(levels: usize) -> Self {
        Mixer {
            levels,
            classes: 1,
            weights: vec![1.0; levels],
        }
    }

    /// `pi_h(v) = [h == v]`.
    pub fn identity(levels: usize) -> Self {
        let mut weights = vec![0.0; levels * levels];
        for v in 0..levels {
            weights[v * levels + v] = 1.0;
        }
        Mixer {
            levels,
            classes: levels,
            weights,
        }
    }

    /// Built from already-normalized row-major weights. Used by samplers that
    /// produce simplex rows by construction.
    pub(crate) fn from_raw(levels: usize, classes: usize, weights: Vec<f64>) -> Self {
        debug_assert_eq!(weights.len(), levels * classes);
        Mixer {
            levels,
            classes,
            weights,
        }
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn row(&self, level: usize) -> &[f64] {
        &self.weights[level * self.classes..(level + 1) * self.classes]
    }

    pub(crate) fn row_mut(&mut self, level: usize) -> &mut [f64] {
        &mut self.weights[level * self.classes..(level + 1) * self.classes]
    }

    pub fn get(&self, level: usize, class: usize) -> f64 {
        self.weights[level * self.classes + class]
    }

    #[cfg(test)]
    pub(crate) fn set(&mut self, level: usize, class: usize, value: f64) {
        self.weights[level * self.classes + class] = value;
    }
}

/// Parameters of the factorized model: core tensor plus one mixer per
/// predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsRepr", into = "ParamsRepr")]
pub struct TensorParams {
    shape: TensorShape,
    index: ModelIndex,
    included: Vec<usize>,
    /// `k_j` of each included predictor, in predictor order.
    extents: Vec<usize>,
    /// `d0` entries per core cell; cells in flat order over `extents`.
    core: Vec<f64>,
    mixers: Vec<Mixer>,
}

#[derive(Serialize, Deserialize)]
struct ParamsRepr {
    shape: TensorShape,
    k: ModelIndex,
    core: Vec<Vec<f64>>,
    mixers: Vec<Mixer>,
}

impl TryFrom<ParamsRepr> for TensorParams {
    type Error = Error;
    fn try_from(r: ParamsRepr) -> Result<Self> {
        TensorParams::new(r.shape, r.k, r.core.concat(), r.mixers)
    }
}

impl From<TensorParams> for ParamsRepr {
    fn from(t: TensorParams) -> Self {
        let d0 = t.shape.classes();
        ParamsRepr {
            core: t.core.chunks_exact(d0).map(<[f64]>::to_vec).collect(),
            shape: t.shape,
            k: t.index,
            mixers: t.mixers,
        }
    }
}

impl TensorParams {
    /// `core` holds `d0` probabilities per core cell, cells in flat order
    /// over the included predictors (last varying fastest). Mixers for
    /// excluded predictors must be trivial.
    pub fn new(
        shape: TensorShape,
        index: ModelIndex,
        core: Vec<f64>,
        mixers: Vec<Mixer>,
    ) -> Result<Self> {
        let index = ModelIndex::new(index.0, &shape)?;
        if mixers.len() != shape.predictors() {
            return Err(Error::ShapeMismatch(format!(
                "{} mixers for {} predictors",
                mixers.len(),
                shape.predictors()
            )));
        }
        for (j, m) in mixers.iter().enumerate() {
            if m.levels() != shape.dims()[j] || m.classes() != index.0[j] {
                return Err(Error::ShapeMismatch(format!(
                    "mixer {j} is {}x{}, expected {}x{}",
                    m.levels(),
                    m.classes(),
                    shape.dims()[j],
                    index.0[j]
                )));
            }
        }
        let included = index.included();
        let extents: Vec<usize> = included.iter().map(|&j| index.0[j]).collect();
        let cells = core_cells(&extents)?;
        let d0 = shape.classes();
        if core.len() != cells * d0 {
            return Err(Error::ShapeMismatch(format!(
                "core has {} entries, expected {}",
                core.len(),
                cells * d0
            )));
        }
        for (c, row) in core.chunks_exact(d0).enumerate() {
            check_simplex(row).map_err(|e| Error::Validation(format!("core cell {c}: {e}")))?;
        }
        Ok(TensorParams {
            shape,
            index,
            included,
            extents,
            core,
            mixers,
        })
    }

    /// Unchecked constructor for samplers that maintain the constraints.
    pub(crate) fn from_parts(
        shape: TensorShape,
        index: ModelIndex,
        core: Vec<f64>,
        mixers: Vec<Mixer>,
    ) -> Self {
        let included = index.included();
        let extents = included.iter().map(|&j| index.0[j]).collect();
        TensorParams {
            shape,
            index,
            included,
            extents,
            core,
            mixers,
        }
    }

    pub fn shape(&self) -> &TensorShape {
        &self.shape
    }

    pub fn index(&self) -> &ModelIndex {
        &self.index
    }

    pub fn included(&self) -> &[usize] {
        &self.included
    }

    /// Latent extents of the included predictors.
    pub fn core_extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn core_cells(&self) -> usize {
        self.core.len() / self.shape.classes()
    }

    /// Class-probability vector of core cell `cell` (flat over included
    /// predictors).
    pub fn core_cell(&self, cell: usize) -> &[f64] {
        let d0 = self.shape.classes();
        &self.core[cell * d0..(cell + 1) * d0]
    }

    pub(crate) fn core_cell_mut(&mut self, cell: usize) -> &mut [f64] {
        let d0 = self.shape.classes();
        &mut self.core[cell * d0..(cell + 1) * d0]
    }

    pub fn core(&self) -> &[f64] {
        &self.core
    }

    /// Core vector at full latent index `h` (one entry per predictor;
    /// entries of excluded predictors must be 0).
    pub fn lambda(&self, h: &[usize]) -> &[f64] {
        let cell = self
            .included
            .iter()
            .zip(&self.extents)
            .fold(0, |acc, (&j, &k)| acc * k + h[j]);
        self.core_cell(cell)
    }

    pub fn mixers(&self) -> &[Mixer] {
        &self.mixers
    }

    pub fn mixer(&self, j: usize) -> &Mixer {
        &self.mixers[j]
    }

    pub(crate) fn mixer_mut(&mut self, j: usize) -> &mut Mixer {
        &mut self.mixers[j]
    }

    /// `P(. | x)`. Cost is `O(d0 * prod_{k_j > 1} k_j)`.
    pub fn evaluate(&self, x: &[usize]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.shape.classes()];
        self.evaluate_into(x, &mut out)?;
        Ok(out)
    }

    pub fn evaluate_into(&self, x: &[usize], out: &mut [f64]) -> Result<()> {
        self.shape.check_point(x)?;
        let rows: Vec<&[f64]> = self
            .included
            .iter()
            .map(|&j| self.mixers[j].row(x[j]))
            .collect();
        self.contract(&rows, out);
        Ok(())
    }

    /// Weighted sum of core vectors where the weight of cell `(h_1..h_m)` is
    /// `prod_t rows[t][h_t]`, `t` ranging over the included predictors.
    pub(crate) fn contract(&self, rows: &[&[f64]], out: &mut [f64]) {
        debug_assert_eq!(rows.len(), self.extents.len());
        let d0 = self.shape.classes();
        out.fill(0.0);
        let m = rows.len();
        if m == 0 {
            out.copy_from_slice(&self.core[..d0]);
            return;
        }
        // prefix[t] = prod_{s < t} rows[s][h_s]
        let mut h = vec![0usize; m];
        let mut prefix = vec![1.0; m + 1];
        for t in 0..m {
            prefix[t + 1] = prefix[t] * rows[t][0];
        }
        let mut cell = 0usize;
        loop {
            let w = prefix[m];
            if w != 0.0 {
                let lam = &self.core[cell * d0..(cell + 1) * d0];
                for (o, &l) in out.iter_mut().zip(lam) {
                    *o += w * l;
                }
            }
            cell += 1;
            // odometer over h, last position fastest
            let mut t = m;
            loop {
                if t == 0 {
                    return;
                }
                t -= 1;
                h[t] += 1;
                if h[t] < self.extents[t] {
                    break;
                }
                h[t] = 0;
            }
            for s in t..m {
                prefix[s + 1] = prefix[s] * rows[s][h[s]];
            }
        }
    }

    /// `Vec{P(y | .)}` over all predictor combinations (last predictor
    /// fastest), computed as the Kronecker product of the mixers applied to
    /// the flattened core slice for class `y`.
    pub fn evaluate_vectorized(&self, y: usize) -> Result<Vec<f64>> {
        let d0 = self.shape.classes();
        if y >= d0 {
            return Err(Error::InvalidInput(format!("class {y} out of range 0..{d0}")));
        }
        dense_cells(&self.shape)?;
        let mut v: Vec<f64> = self.core.chunks_exact(d0).map(|c| c[y]).collect();
        // current extent per predictor: k_j before its mode product, d_j after
        let mut dims: Vec<usize> = self.index.0.clone();
        for j in 0..self.shape.predictors() {
            v = mode_product(&v, &dims, j, &self.mixers[j]);
            dims[j] = self.shape.dims()[j];
        }
        Ok(v)
    }
}

impl ConditionalModel for TensorParams {
    fn shape(&self) -> &TensorShape {
        &self.shape
    }

    fn conditional_into(&self, x: &[usize], out: &mut [f64]) -> Result<()> {
        self.evaluate_into(x, out)
    }
}

/// `out[l, v, r] = sum_h mixer[v][h] * input[l, h, r]` along axis `axis`.
fn mode_product(input: &[f64], dims: &[usize], axis: usize, mixer: &Mixer) -> Vec<f64> {
    let left: usize = dims[..axis].iter().product();
    let right: usize = dims[axis + 1..].iter().product();
    let k = dims[axis];
    let d = mixer.levels();
    let mut out = vec![0.0; left * d * right];
    for l in 0..left {
        for v in 0..d {
            let row = mixer.row(v);
            let dst = &mut out[(l * d + v) * right..(l * d + v + 1) * right];
            for (h, &w) in row.iter().enumerate().take(k) {
                if w == 0.0 {
                    continue;
                }
                let src = &input[(l * k + h) * right..(l * k + h + 1) * right];
                for (o, &s) in dst.iter_mut().zip(src) {
                    *o += w * s;
                }
            }
        }
    }
    out
}

fn core_cells(extents: &[usize]) -> Result<usize> {
    extents
        .iter()
        .try_fold(1usize, |acc, &k| acc.checked_mul(k))
        .filter(|&c| c <= DENSE_CELL_LIMIT)
        .ok_or_else(|| {
            Error::Capacity(format!(
                "core tensor over extents {extents:?} exceeds {DENSE_CELL_LIMIT} cells"
            ))
        })
}

pub(crate) fn checked_core_cells(extents: &[usize]) -> Result<usize> {
    core_cells(extents)
}
