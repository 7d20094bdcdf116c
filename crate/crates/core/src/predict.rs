//! Posterior-predictive classification and evaluation.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gibbs::FitResult;
use crate::oracles::SyntheticTruth;
use crate::tensor::{ConditionalModel, TensorShape};

/// Largest grid over the relevant predictors enumerated when computing aMSE.
pub const AMSE_GRID_LIMIT: usize = 1 << 24;

/// Retained draws of a model fitted on a subset of predictors, addressed by
/// points over the full predictor set.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveModel {
    shape: TensorShape,
    selected: Vec<usize>,
    fit: FitResult,
    class_frequencies: Vec<f64>,
}

impl PredictiveModel {
    /// `shape` covers all predictors; the draws in `fit` cover `selected`
    /// (ascending) only.
    pub fn new(shape: TensorShape, selected: Vec<usize>, fit: FitResult, class_frequencies: Vec<f64>) -> Result<Self> {
        if fit.draws.is_empty() {
            return Err(Error::Empty("model has no retained draws".into()));
        }
        let p = shape.predictors();
        if selected.windows(2).any(|w| w[0] >= w[1]) || selected.last().is_some_and(|&j| j >= p) {
            return Err(Error::InvalidInput(format!(
                "selected predictors {selected:?} must be ascending and below {p}"
            )));
        }
        let reduced = TensorShape::new(shape.classes(), selected.iter().map(|&j| shape.dims()[j]).collect())?;
        if let Some(t) = fit.draws.iter().position(|d| *d.shape() != reduced) {
            return Err(Error::ShapeMismatch(format!("draw {t} does not match the selected predictors")));
        }
        if class_frequencies.len() != shape.classes() {
            return Err(Error::ShapeMismatch(format!(
                "{} class frequencies for {} classes",
                class_frequencies.len(),
                shape.classes()
            )));
        }
        Ok(PredictiveModel {
            shape,
            selected,
            fit,
            class_frequencies,
        })
    }

    pub fn shape(&self) -> &TensorShape {
        &self.shape
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn fit(&self) -> &FitResult {
        &self.fit
    }

    /// Training class frequencies; the error of always predicting the
    /// majority class is reported against them.
    pub fn class_frequencies(&self) -> &[f64] {
        &self.class_frequencies
    }

    fn check_len(&self, x: &[usize]) -> Result<()> {
        if x.len() != self.shape.predictors() {
            return Err(Error::ShapeMismatch(format!(
                "point has {} coordinates, expected {}",
                x.len(),
                self.shape.predictors()
            )));
        }
        Ok(())
    }

    /// Whether `x` carries a level beyond the training levels at a selected
    /// predictor.
    pub fn has_unseen(&self, x: &[usize]) -> bool {
        self.selected.iter().any(|&j| x[j] >= self.shape.dims()[j])
    }

    /// Mean over draws of `P(. | x)`, evaluating each draw separately. A
    /// level never seen in training gets the uniform row `1/k_j` in every
    /// draw; levels of unselected predictors are ignored.
    pub fn predict_proba_into(&self, x: &[usize], out: &mut [f64]) -> Result<()> {
        self.check_len(x)?;
        let d0 = self.shape.classes();
        let mut one = vec![0.0; d0];
        out.fill(0.0);
        let mut uniform: Vec<Vec<f64>> = Vec::new();
        for draw in &self.fit.draws {
            let included = draw.included();
            if uniform.len() < included.len() {
                uniform.resize(included.len(), Vec::new());
            }
            for (t, &s) in included.iter().enumerate() {
                let k = draw.index().as_slice()[s];
                if uniform[t].len() != k {
                    uniform[t] = vec![1.0 / k as f64; k];
                }
            }
            let rows: Vec<&[f64]> = included
                .iter()
                .enumerate()
                .map(|(t, &s)| {
                    let level = x[self.selected[s]];
                    if level < draw.shape().dims()[s] {
                        draw.mixer(s).row(level)
                    } else {
                        uniform[t].as_slice()
                    }
                })
                .collect();
            draw.contract(&rows, &mut one);
            for (o, v) in out.iter_mut().zip(&one) {
                *o += v;
            }
        }
        let m = self.fit.draws.len() as f64;
        out.iter_mut().for_each(|o| *o /= m);
        Ok(())
    }

    pub fn predict_proba(&self, x: &[usize]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.shape.classes()];
        self.predict_proba_into(x, &mut out)?;
        Ok(out)
    }

    /// Most probable class; ties go to the smaller index.
    pub fn classify(&self, x: &[usize]) -> Result<usize> {
        Ok(argmax(&self.predict_proba(x)?))
    }

    pub fn classify_batch(&self, xs: &[Vec<usize>]) -> Result<Vec<usize>> {
        xs.iter().map(|x| self.classify(x)).collect()
    }
}

impl ConditionalModel for PredictiveModel {
    fn shape(&self) -> &TensorShape {
        &self.shape
    }

    fn conditional_into(&self, x: &[usize], out: &mut [f64]) -> Result<()> {
        self.predict_proba_into(x, out)
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (c, &w) in v.iter().enumerate().skip(1) {
        if w > v[best] {
            best = c;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub misclassification: f64,
    /// Error of always predicting the most frequent training class.
    pub majority_misclassification: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    /// Test rows with an unseen level at a selected predictor.
    pub unseen_rows: usize,
    /// Mean over all predictor combinations of
    /// `(1/2) sum_y (P(y|x) - P^(y|x))^2`; for two classes this is the
    /// squared error in `P(Y = 1 | x)`.
    pub amse: Option<f64>,
    /// Mean over the test points of `sum_y |P(y|x) - P^(y|x)|`.
    pub tv_distance: Option<f64>,
}

impl EvalReport {
    /// `key = value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "misclassification = {}", self.misclassification);
        let _ = writeln!(s, "majority_misclassification = {}", self.majority_misclassification);
        let rows: Vec<String> = self
            .confusion
            .iter()
            .map(|r| r.iter().map(usize::to_string).collect::<Vec<_>>().join(","))
            .collect();
        let _ = writeln!(s, "confusion = {}", rows.join(";"));
        let _ = writeln!(s, "unseen_rows = {}", self.unseen_rows);
        if let Some(a) = self.amse {
            let _ = writeln!(s, "amse = {a}");
        }
        if let Some(t) = self.tv_distance {
            let _ = writeln!(s, "tv_distance = {t}");
        }
        s
    }
}

/// Misclassification and confusion on `test`, plus aMSE and the TV distance
/// when the generating law is known. `test` must list the model's
/// predictors in order; levels past the training levels count as unseen.
pub fn evaluate(model: &PredictiveModel, test: &Dataset, truth: Option<&SyntheticTruth>) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::Empty("test set has no rows".into()));
    }
    let p = model.shape.predictors();
    let d0 = model.shape.classes();
    if test.predictors() != p {
        return Err(Error::ShapeMismatch(format!(
            "test data has {} predictors, model has {p}",
            test.predictors()
        )));
    }
    if let Some(t) = truth {
        if t.shape() != model.shape() {
            return Err(Error::ShapeMismatch("truth and model shapes differ".into()));
        }
    }
    let mut confusion = vec![vec![0usize; d0]; d0];
    let mut unseen_rows = 0;
    let mut errors = 0;
    let mut tv = 0.0;
    let mut probs = vec![0.0; d0];
    let mut exact = vec![0.0; d0];
    for i in 0..test.len() {
        let y = test.response(i);
        if y >= d0 {
            return Err(Error::Validation(format!("test row {i}: class not seen in training")));
        }
        let x = test.row_usize(i);
        if model.has_unseen(&x) {
            unseen_rows += 1;
        }
        model.predict_proba_into(&x, &mut probs)?;
        let c = argmax(&probs);
        confusion[y][c] += 1;
        errors += usize::from(c != y);
        if let Some(t) = truth {
            if x.iter().zip(model.shape.dims()).any(|(&v, &d)| v >= d) {
                return Err(Error::ShapeMismatch(format!("test row {i} has levels the truth does not cover")));
            }
            t.conditional_into(&x, &mut exact)?;
            tv += exact.iter().zip(&probs).map(|(a, b)| (a - b).abs()).sum::<f64>();
        }
    }
    let n = test.len();
    let majority = argmax(model.class_frequencies());
    let majority_errors = test.responses().filter(|&y| y != majority).count();
    Ok(EvalReport {
        n,
        misclassification: errors as f64 / n as f64,
        majority_misclassification: majority_errors as f64 / n as f64,
        confusion,
        unseen_rows,
        amse: truth.map(|t| amse(model, t)).transpose()?,
        tv_distance: truth.map(|_| tv / n as f64),
    })
}

/// aMSE over every predictor combination, `1/2 sum_y` of the squared
/// difference averaged over the full grid. Never enumerates more than the
/// selected grid and the relevant grid separately.
pub fn amse(model: &PredictiveModel, truth: &SyntheticTruth) -> Result<f64> {
    if truth.shape() != model.shape() {
        return Err(Error::ShapeMismatch("truth and model shapes differ".into()));
    }
    // The fitted model depends on the selected predictors only and the truth
    // on the relevant ones, so with x uniform on the grid
    // E(f - g)^2 = E f^2 + E g^2 - 2 E_shared[E(f | shared) E(g | shared)].
    let d0 = model.shape.classes();
    let dims = model.shape.dims();
    let relevant = truth.relevant();
    let shared: Vec<usize> = model.selected.iter().filter(|j| relevant.contains(j)).copied().collect();
    let shared_cells: usize = shared.iter().map(|&j| dims[j]).product();
    let key = |x: &[usize], axes: &[usize]| -> usize {
        shared.iter().fold(0, |acc, j| {
            let t = axes.iter().position(|a| a == j).unwrap();
            acc * dims[*j] + x[t]
        })
    };

    // posterior mean table over the selected predictors, last one fastest
    let sel_shape = TensorShape::new(d0, model.selected.iter().map(|&j| dims[j]).collect())?;
    let mut fitted: Vec<Vec<f64>> = Vec::with_capacity(d0);
    for y in 0..d0 {
        let mut acc: Vec<f64> = Vec::new();
        for draw in &model.fit.draws {
            let v = draw.evaluate_vectorized(y)?;
            if acc.is_empty() {
                acc = v;
            } else {
                acc.iter_mut().zip(&v).for_each(|(a, b)| *a += b);
            }
        }
        let m = model.fit.draws.len() as f64;
        acc.iter_mut().for_each(|a| *a /= m);
        fitted.push(acc);
    }
    let sel_cells = fitted[0].len();
    let mut ff = 0.0;
    let mut f_shared = vec![0.0; d0 * shared_cells];
    let mut x = vec![0usize; model.selected.len()];
    for c in 0..sel_cells {
        sel_shape.unflatten(c, &mut x);
        let s = key(&x, &model.selected);
        for (y, table) in fitted.iter().enumerate() {
            ff += table[c] * table[c];
            f_shared[y * shared_cells + s] += table[c];
        }
    }

    let rel_shape = TensorShape::new(d0, relevant.iter().map(|&j| dims[j]).collect())?;
    let rel_cells = rel_shape
        .cell_count()
        .filter(|&c| c <= AMSE_GRID_LIMIT)
        .ok_or_else(|| Error::Capacity(format!("aMSE grid over {} relevant predictors is too large", relevant.len())))?;
    let mut gg = 0.0;
    let mut g_shared = vec![0.0; d0 * shared_cells];
    let mut xr = vec![0usize; relevant.len()];
    let mut point = vec![0usize; dims.len()];
    let mut exact = vec![0.0; d0];
    for c in 0..rel_cells {
        rel_shape.unflatten(c, &mut xr);
        for (&j, &v) in relevant.iter().zip(&xr) {
            point[j] = v;
        }
        truth.conditional_into(&point, &mut exact)?;
        let s = key(&xr, relevant);
        for (y, g) in exact.iter().enumerate() {
            gg += g * g;
            g_shared[y * shared_cells + s] += g;
        }
    }

    let (sel_per, rel_per) = ((sel_cells / shared_cells) as f64, (rel_cells / shared_cells) as f64);
    let cross = f_shared
        .iter()
        .zip(&g_shared)
        .map(|(f, g)| (f / sel_per) * (g / rel_per))
        .sum::<f64>()
        / shared_cells as f64;
    let total = ff / sel_cells as f64 + gg / rel_cells as f64 - 2.0 * cross;
    Ok(0.5 * total.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::link;
    use crate::tensor::{Mixer, ModelIndex, TensorParams};
    use crate::testutil::random_params;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fit(draws: Vec<TensorParams>) -> FitResult {
        FitResult {
            draws,
            iters: 1,
            burnin: 0,
            thin: 1,
            seed: 0,
        }
    }

    fn intercept(probs: &[f64]) -> TensorParams {
        let shape = TensorShape::new(probs.len(), vec![]).unwrap();
        TensorParams::new(shape, ModelIndex::null(0), probs.to_vec(), vec![]).unwrap()
    }

    fn constant_model(shape: TensorShape, probs: &[f64]) -> PredictiveModel {
        let d0 = shape.classes();
        PredictiveModel::new(shape, vec![], fit(vec![intercept(probs)]), vec![1.0 / d0 as f64; d0]).unwrap()
    }

    #[test]
    fn single_draw_matches_evaluate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draw = random_params(&mut rng, 3, &[3, 2], &[2, 2]);
        let shape = TensorShape::new(3, vec![2, 3, 4, 2]).unwrap();
        let m = PredictiveModel::new(shape, vec![1, 3], fit(vec![draw.clone()]), vec![0.2, 0.3, 0.5]).unwrap();
        for x in m.shape().grid() {
            let got = m.predict_proba(&x).unwrap();
            let want = draw.evaluate(&[x[1], x[3]]).unwrap();
            assert_eq!(got, want);
            assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn draws_are_averaged_after_evaluation() {
        let shape = TensorShape::new(2, vec![2, 2]).unwrap();
        let k = ModelIndex::new(vec![2, 2], &shape).unwrap();
        // class 0 exactly when the two latent classes agree
        let core = vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0];
        let swapped = Mixer::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let a = TensorParams::new(shape.clone(), k.clone(), core.clone(), vec![Mixer::identity(2); 2]).unwrap();
        let b = TensorParams::new(shape.clone(), k, core, vec![swapped.clone(), swapped]).unwrap();
        let m = PredictiveModel::new(shape, vec![0, 1], fit(vec![a, b]), vec![0.5, 0.5]).unwrap();
        // averaging the mixers first would give (0.5, 0.5)
        assert_eq!(m.predict_proba(&[0, 0]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(m.predict_proba(&[0, 1]).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn two_draw_mean() {
        let shape = TensorShape::new(2, vec![3]).unwrap();
        let m = PredictiveModel::new(
            shape,
            vec![],
            fit(vec![intercept(&[0.2, 0.8]), intercept(&[0.6, 0.4])]),
            vec![0.5, 0.5],
        )
        .unwrap();
        let got = m.predict_proba(&[2]).unwrap();
        assert!((got[0] - 0.4).abs() < 1e-15 && (got[1] - 0.6).abs() < 1e-15);
        assert_eq!(m.classify(&[0]).unwrap(), 1);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.7, 0.3]), 0);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
    }

    #[test]
    fn unselected_predictors_are_ignored() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draw = random_params(&mut rng, 2, &[4], &[3]);
        let shape = TensorShape::new(2, vec![3, 4, 3]).unwrap();
        let m = PredictiveModel::new(shape, vec![1], fit(vec![draw]), vec![0.5, 0.5]).unwrap();
        let base = m.predict_proba(&[0, 2, 0]).unwrap();
        for a in 0..3 {
            for c in 0..3 {
                assert_eq!(m.predict_proba(&[a, 2, c]).unwrap(), base);
            }
        }
        // beyond-range levels at unselected predictors are harmless
        assert_eq!(m.predict_proba(&[9, 2, 9]).unwrap(), base);
        assert!(!m.has_unseen(&[9, 2, 9]));
        let xs: Vec<Vec<usize>> = (0..4).map(|v| vec![0, v, 0]).collect();
        let batch = m.classify_batch(&xs).unwrap();
        for (x, c) in xs.iter().zip(batch) {
            assert_eq!(m.classify(x).unwrap(), c);
        }
    }

    #[test]
    fn unseen_level_uses_uniform_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draw = random_params(&mut rng, 2, &[3], &[2]);
        let shape = TensorShape::new(2, vec![3]).unwrap();
        let m = PredictiveModel::new(shape, vec![0], fit(vec![draw.clone()]), vec![0.5, 0.5]).unwrap();
        let got = m.predict_proba(&[3]).unwrap();
        let want: Vec<f64> = (0..2)
            .map(|y| 0.5 * (draw.core_cell(0)[y] + draw.core_cell(1)[y]))
            .collect();
        assert!((got[0] - want[0]).abs() < 1e-15 && (got[1] - want[1]).abs() < 1e-15);
        assert!(m.has_unseen(&[3]));
        assert!(m.predict_proba(&[0, 0]).is_err());
    }

    #[test]
    fn perfect_model_on_separable_data() {
        let shape = TensorShape::new(2, vec![2]).unwrap();
        let k = ModelIndex::new(vec![2], &shape).unwrap();
        let draw = TensorParams::new(shape.clone(), k, vec![1.0, 0.0, 0.0, 1.0], vec![Mixer::identity(2)]).unwrap();
        let m = PredictiveModel::new(shape, vec![0], fit(vec![draw]), vec![0.5, 0.5]).unwrap();
        let test = Dataset::from_indices(2, &[2], vec![0, 1, 1, 0], vec![vec![0], vec![1], vec![1], vec![0]]).unwrap();
        let r = evaluate(&m, &test, None).unwrap();
        assert_eq!(r.misclassification, 0.0);
        assert_eq!(r.confusion, vec![vec![2, 0], vec![0, 2]]);
        assert_eq!(r.majority_misclassification, 0.5);
        assert!(r.amse.is_none());
    }

    #[test]
    fn reduced_grid_matches_full_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let dims: Vec<usize> = (0..6).map(|_| rng.random_range(2..4)).collect();
            let table: Vec<f64> = (0..dims[1] * dims[4]).map(|_| rng.random()).collect();
            let truth = SyntheticTruth::new(dims.clone(), vec![1, 4], table).unwrap();
            let draws = (0..3)
                .map(|_| random_params(&mut rng, 2, &[dims[0], dims[1]], &[2, dims[1]]))
                .collect();
            let shape = TensorShape::new(2, dims).unwrap();
            let m = PredictiveModel::new(shape.clone(), vec![0, 1], fit(draws), vec![0.5, 0.5]).unwrap();
            let grid = shape.grid();
            let naive = grid
                .iter()
                .map(|x| {
                    let f = m.predict_proba(x).unwrap()[1];
                    (f - truth.prob_one(x).unwrap()).powi(2)
                })
                .sum::<f64>()
                / grid.len() as f64;
            let fast = amse(&m, &truth).unwrap();
            assert!((naive - fast).abs() < 1e-14, "{naive} vs {fast}");
        }
    }

    #[test]
    fn constant_model_amse_is_link_variance() {
        // E[(f(U) - 1/2)^2] by the midpoint rule
        let steps = 1_000_000;
        let var = (0..steps)
            .map(|t| (link((t as f64 + 0.5) / steps as f64) - 0.5).powi(2))
            .sum::<f64>()
            / steps as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let truth = SyntheticTruth::generate(&mut rng, 8, 4, &[1, 3, 5, 7]).unwrap();
        let m = constant_model(truth.shape().clone(), &[0.5, 0.5]);
        let got = amse(&m, &truth).unwrap();
        let sq: Vec<f64> = truth.table().iter().map(|f| (f - 0.5).powi(2)).collect();
        let mean = sq.iter().sum::<f64>() / sq.len() as f64;
        let sd = (sq.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (sq.len() - 1) as f64).sqrt();
        assert!((got - mean).abs() < 1e-15);
        assert!((got - var).abs() < 3.0 * sd / (sq.len() as f64).sqrt(), "{got} vs {var}");
    }

    #[test]
    fn tv_distance_against_truth() {
        let truth = SyntheticTruth::new(vec![2, 2], vec![0], vec![0.9, 0.1]).unwrap();
        let m = constant_model(truth.shape().clone(), &[0.5, 0.5]);
        let test = Dataset::from_indices(2, &[2, 2], vec![0, 1], vec![vec![0, 1], vec![1, 0]]).unwrap();
        let r = evaluate(&m, &test, Some(&truth)).unwrap();
        assert!((r.tv_distance.unwrap() - 0.8).abs() < 1e-12);
        assert!((r.amse.unwrap() - 0.16).abs() < 1e-12);
        let other = SyntheticTruth::new(vec![2, 3], vec![0], vec![0.9, 0.1]).unwrap();
        assert!(evaluate(&m, &test, Some(&other)).is_err());
    }

    #[test]
    fn report_text() {
        let r = EvalReport {
            n: 4,
            misclassification: 0.25,
            majority_misclassification: 0.5,
            confusion: vec![vec![1, 1], vec![0, 2]],
            unseen_rows: 0,
            amse: Some(0.01),
            tv_distance: None,
        };
        assert_eq!(
            r.to_text(),
            "n = 4\nmisclassification = 0.25\nmajority_misclassification = 0.5\nconfusion = 1,1;0,2\nunseen_rows = 0\namse = 0.01\n"
        );
    }

    #[test]
    fn construction_checks() {
        let shape = TensorShape::new(2, vec![3, 3]).unwrap();
        assert!(PredictiveModel::new(shape.clone(), vec![], fit(vec![]), vec![0.5, 0.5]).is_err());
        assert!(PredictiveModel::new(shape.clone(), vec![1, 0], fit(vec![intercept(&[0.5, 0.5])]), vec![0.5, 0.5]).is_err());
        assert!(PredictiveModel::new(shape.clone(), vec![0], fit(vec![intercept(&[0.5, 0.5])]), vec![0.5, 0.5]).is_err());
        assert!(PredictiveModel::new(shape, vec![], fit(vec![intercept(&[0.5, 0.5])]), vec![1.0]).is_err());
    }
}
