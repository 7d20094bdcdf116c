//! Dirichlet priors on the core and mixers, and the sparsity prior on the
//! latent-class counts `k`.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Mixer, ModelIndex};

/// Prior hyperparameters.
///
/// `r` is the prior expected number of included predictors and `r_bar` the
/// hard cap on how many may be included at once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub r: f64,
    pub r_bar: usize,
    /// Symmetric Dirichlet concentration for every core vector; `1/d0` by
    /// default.
    pub lambda_concentration: f64,
}

impl Hyperparams {
    pub fn new(r: f64, r_bar: usize, lambda_concentration: f64, p: usize) -> Result<Self> {
        let hp = Hyperparams {
            r,
            r_bar,
            lambda_concentration,
        };
        hp.validate(p)?;
        Ok(hp)
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if !(self.r > 0.0 && self.r <= self.r_bar as f64 && self.r_bar <= p) {
            return Err(Error::Config(format!(
                "need 0 < r <= r_bar <= p, got r = {}, r_bar = {}, p = {p}",
                self.r, self.r_bar
            )));
        }
        if !(self.lambda_concentration > 0.0 && self.lambda_concentration.is_finite()) {
            return Err(Error::Config("lambda concentration must be positive".into()));
        }
        Ok(())
    }

    /// Log prior mass of `k_j = 1` and of each individual value `k_j >= 2`
    /// for a predictor with `levels` levels among `p`.
    fn log_masses(&self, levels: usize, p: usize) -> Result<(f64, f64)> {
        let q = self.r / p as f64;
        if q >= 1.0 {
            return Err(Error::Config(format!("r must be < p (r = {}, p = {p})", self.r)));
        }
        Ok(((1.0 - q).ln(), (q / (levels - 1) as f64).ln()))
    }

    /// Change in log prior when predictor `j` (with `levels` levels) goes
    /// from excluded to included, ignoring the cap.
    pub fn log_inclusion_ratio(&self, levels: usize, p: usize) -> Result<f64> {
        let (out, inc) = self.log_masses(levels, p)?;
        Ok(inc - out)
    }
}

/// Defaults `r = log_d(n)` and `r_bar = ceil(2r)`, capped at `p`.
///
/// When `log_d(n) >= p` the expected count is lowered to `p / 2` so the
/// per-predictor inclusion probability `r / p` stays below one.
pub fn default_hyperparams(n: usize, d: usize, p: usize, d0: usize) -> Result<Hyperparams> {
    if n < 2 || d < 2 || p < 1 || d0 < 2 {
        return Err(Error::Config(format!(
            "default hyperparameters need n >= 2, d >= 2, p >= 1, d0 >= 2 (got {n}, {d}, {p}, {d0})"
        )));
    }
    let mut r = (n as f64).ln() / (d as f64).ln();
    // log_d(d^m) should come out as exactly m
    if (r - r.round()).abs() < 1e-9 {
        r = r.round();
    }
    if r >= p as f64 {
        r = p as f64 / 2.0;
    }
    let r_bar = ((2.0 * r).ceil() as usize).clamp(1, p);
    Ok(Hyperparams {
        r,
        r_bar,
        lambda_concentration: 1.0 / d0 as f64,
    })
}

/// Inclusion indicators `gamma_j = [k_j > 1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InclusionVector(pub Vec<bool>);

impl InclusionVector {
    pub fn from_index(k: &ModelIndex) -> Self {
        InclusionVector(k.as_slice().iter().map(|&kj| kj > 1).collect())
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&g| g).count()
    }
}

/// Unnormalized log prior of `k`: independent per-predictor masses times the
/// cap indicator `#{j : k_j > 1} <= r_bar`.
pub fn log_prior_k(k: &ModelIndex, dims: &[usize], hp: &Hyperparams) -> Result<f64> {
    let p = k.len();
    if dims.len() != p {
        return Err(Error::ShapeMismatch("model index and level counts differ".into()));
    }
    let mut total = 0.0;
    let mut included = 0;
    for (&kj, &dj) in k.as_slice().iter().zip(dims) {
        if kj == 0 || kj > dj {
            return Err(Error::Validation(format!("k = {kj} outside 1..={dj}")));
        }
        let (out, inc) = hp.log_masses(dj, p)?;
        if kj > 1 {
            included += 1;
            total += inc;
        } else {
            total += out;
        }
    }
    if included > hp.r_bar {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(total)
}

/// Draws from `Dirichlet(alpha)` into `out`.
///
/// Each coordinate is a Gamma draw normalized by the total. Shapes below one
/// use `G(a) = G(a + 1) * U^(1/a)` in log space, so tiny draws do not
/// underflow before normalization.
pub fn sample_dirichlet<R: Rng + ?Sized>(rng: &mut R, alpha: &[f64], out: &mut [f64]) {
    debug_assert_eq!(alpha.len(), out.len());
    if out.len() == 1 {
        out[0] = 1.0;
        return;
    }
    for (o, &a) in out.iter_mut().zip(alpha) {
        *o = log_gamma_draw(rng, a);
    }
    normalize_log(out);
}

/// Symmetric `Dirichlet(a, .., a)` draw into `out`.
pub fn sample_symmetric_dirichlet<R: Rng + ?Sized>(rng: &mut R, a: f64, out: &mut [f64]) {
    if out.len() == 1 {
        out[0] = 1.0;
        return;
    }
    for o in out.iter_mut() {
        *o = log_gamma_draw(rng, a);
    }
    normalize_log(out);
}

fn normalize_log(out: &mut [f64]) {
    let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for o in out.iter_mut() {
        *o = (*o - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Log of a `Gamma(shape, 1)` draw.
fn log_gamma_draw<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    if shape >= 1.0 {
        let g: f64 = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
        g.ln()
    } else {
        let g: f64 = Gamma::new(shape + 1.0, 1.0).expect("positive shape").sample(rng);
        // 1 - U lies in (0, 1]
        let u: f64 = 1.0 - rng.random::<f64>();
        g.ln() + u.ln() / shape
    }
}

/// Core vector drawn from `Dirichlet(a, .., a)` over `d0` classes.
pub fn sample_lambda_prior<R: Rng + ?Sized>(rng: &mut R, d0: usize, a: f64) -> Vec<f64> {
    let mut v = vec![0.0; d0];
    sample_symmetric_dirichlet(rng, a, &mut v);
    v
}

/// `levels x k` mixer whose rows are independent `Dirichlet(1/k, .., 1/k)`
/// draws.
pub fn sample_mixer_prior<R: Rng + ?Sized>(rng: &mut R, k: usize, levels: usize) -> Mixer {
    if k == 1 {
        return Mixer::trivial(levels);
    }
    let mut weights = vec![0.0; levels * k];
    let a = 1.0 / k as f64;
    for row in weights.chunks_exact_mut(k) {
        sample_symmetric_dirichlet(rng, a, row);
    }
    Mixer::from_raw(levels, k, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::TensorShape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn defaults_for_powers_of_d() {
        let hp = default_hyperparams(256, 4, 600, 2).unwrap();
        assert_eq!(hp.r, 4.0);
        assert_eq!(hp.r_bar, 8);
        let hp = default_hyperparams(7, 7, 10, 2).unwrap();
        assert_eq!((hp.r, hp.r_bar), (1.0, 2));
    }

    #[test]
    fn defaults_for_non_integral_log() {
        let hp = default_hyperparams(600, 4, 600, 2).unwrap();
        assert!((hp.r - 600f64.ln() / 4f64.ln()).abs() < 1e-15);
        assert!((hp.r - 4.614).abs() < 1e-3);
        assert_eq!(hp.r_bar, 10);
        assert_eq!(hp.lambda_concentration, 0.5);
    }

    #[test]
    fn defaults_are_valid_for_small_p() {
        let hp = default_hyperparams(600, 4, 3, 2).unwrap();
        hp.validate(3).unwrap();
        assert!(hp.r < 3.0);
    }

    fn hp(r: f64, r_bar: usize) -> Hyperparams {
        Hyperparams {
            r,
            r_bar,
            lambda_concentration: 0.5,
        }
    }

    #[test]
    fn null_model_prior() {
        let shape = TensorShape::new(2, vec![2; 5]).unwrap();
        let lp = log_prior_k(&ModelIndex::null(5), shape.dims(), &hp(1.5, 3)).unwrap();
        assert!((lp - 5.0 * (1.0 - 0.3f64).ln()).abs() < 1e-14);
    }

    #[test]
    fn cap_violation_is_minus_infinity() {
        let shape = TensorShape::new(2, vec![2; 5]).unwrap();
        let k = ModelIndex::new(vec![2, 2, 2, 1, 1], &shape).unwrap();
        assert_eq!(log_prior_k(&k, shape.dims(), &hp(1.0, 2)).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn hand_computed_prior() {
        let shape = TensorShape::new(2, vec![2; 3]).unwrap();
        let k = ModelIndex::new(vec![2, 1, 1], &shape).unwrap();
        let lp = log_prior_k(&k, shape.dims(), &hp(1.0, 3)).unwrap();
        assert!((lp - ((1.0 / 3.0) * (2.0f64 / 3.0).powi(2)).ln()).abs() < 1e-14);
    }

    #[test]
    fn r_not_below_p_is_config_error() {
        let shape = TensorShape::new(2, vec![2; 2]).unwrap();
        let r = log_prior_k(&ModelIndex::null(2), shape.dims(), &hp(2.0, 2));
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn prior_is_additive_without_cap() {
        let h = hp(1.0, 6);
        let a = [2usize, 1, 3];
        let b = [1usize, 4, 1];
        let dims = [3usize, 4, 4];
        let both: Vec<usize> = a.iter().chain(&b).copied().collect();
        let dims2: Vec<usize> = dims.iter().chain(&dims).copied().collect();
        let s = TensorShape::new(2, dims2.clone()).unwrap();
        let total = log_prior_k(&ModelIndex::new(both, &s).unwrap(), &dims2, &h).unwrap();
        // each block evaluated with the same per-predictor masses (p = 6)
        let per = |k: &[usize]| -> f64 {
            k.iter()
                .zip(&dims)
                .map(|(&kj, &d)| {
                    if kj == 1 {
                        (1.0 - 1.0 / 6.0f64).ln()
                    } else {
                        (1.0 / (6.0 * (d - 1) as f64)).ln()
                    }
                })
                .sum()
        };
        assert!((total - per(&a) - per(&b)).abs() < 1e-13);
    }

    #[test]
    fn inclusion_probability_is_r_over_p() {
        // summing the per-predictor masses of k_j >= 2 gives r / p
        let (p, d, r) = (7usize, 4usize, 2.5);
        let (_, inc) = hp(r, p).log_masses(d, p).unwrap();
        assert!(((d - 1) as f64 * inc.exp() - r / p as f64).abs() < 1e-15);
    }

    #[test]
    fn trivial_mixer_is_all_ones() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = sample_mixer_prior(&mut rng, 1, 4);
        assert_eq!(m.classes(), 1);
        assert!((0..4).all(|v| m.row(v) == [1.0]));
    }

    #[test]
    fn lambda_prior_mean_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let mut mean = [0.0; 2];
        for _ in 0..n {
            let v = sample_lambda_prior(&mut rng, 2, 0.5);
            assert!((v[0] + v[1] - 1.0).abs() < 1e-12);
            mean[0] += v[0] / n as f64;
            mean[1] += v[1] / n as f64;
        }
        assert!((mean[0] - 0.5).abs() < 0.01 && (mean[1] - 0.5).abs() < 0.01, "{mean:?}");
    }

    #[test]
    fn mixer_prior_mean_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let mut mean = [0.0; 3];
        for _ in 0..n {
            let m = sample_mixer_prior(&mut rng, 3, 1);
            for (acc, &w) in mean.iter_mut().zip(m.row(0)) {
                *acc += w / n as f64;
            }
        }
        for m in mean {
            assert!((m - 1.0 / 3.0).abs() < 0.01, "{mean:?}");
        }
    }

    #[test]
    fn tiny_shapes_do_not_underflow() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut out = [0.0; 8];
        for _ in 0..10_000 {
            sample_symmetric_dirichlet(&mut rng, 0.01, &mut out);
            let s: f64 = out.iter().sum();
            assert!(out.iter().all(|x| x.is_finite()));
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn seeded_draws_are_deterministic() {
        let a = sample_mixer_prior(&mut ChaCha8Rng::seed_from_u64(9), 3, 4);
        let b = sample_mixer_prior(&mut ChaCha8Rng::seed_from_u64(9), 3, 4);
        assert_eq!(a, b);
    }
}
