//! Fixed-`k` Gibbs sampler over the core, the mixers and the latent class
//! indicators.
//!
//! Latent indicators are only stored for included predictors: a predictor
//! with `k_j = 1` has `z_ij = 0` for every `i` and never touches the RNG, so
//! the values it takes in the data cannot change a chain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::priors::{sample_dirichlet, sample_mixer_prior, sample_symmetric_dirichlet, Hyperparams};
use crate::tensor::{checked_core_cells, Mixer, ModelIndex, TensorParams};

/// Chain length settings. `burnin` iterations are discarded, then every
/// `thin`-th draw is kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GibbsConfig {
    pub iters: usize,
    pub burnin: usize,
    pub thin: usize,
    pub seed: u64,
}

impl GibbsConfig {
    /// First half discarded, no thinning.
    pub fn new(iters: usize, seed: u64) -> Self {
        GibbsConfig {
            iters,
            burnin: iters / 2,
            thin: 1,
            seed,
        }
    }

    pub fn retained(&self) -> usize {
        if self.thin == 0 {
            return 0;
        }
        self.iters.saturating_sub(self.burnin) / self.thin
    }

    fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::Config("thinning stride must be at least 1".into()));
        }
        if self.iters <= self.burnin {
            return Err(Error::Config(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iters, self.burnin
            )));
        }
        if self.retained() == 0 {
            return Err(Error::Empty(format!(
                "{} post burn-in iterations with stride {} retain no draws",
                self.iters - self.burnin,
                self.thin
            )));
        }
        Ok(())
    }
}

/// Retained posterior draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub draws: Vec<TensorParams>,
    pub iters: usize,
    pub burnin: usize,
    pub thin: usize,
    pub seed: u64,
}

/// Current parameters and latent indicators of one chain.
#[derive(Debug, Clone)]
pub struct GibbsState {
    params: TensorParams,
    /// `n x m` over the `m` included predictors.
    z: Vec<u16>,
    /// Flat core cell of each observation, kept in step with `z`.
    cell: Vec<usize>,
    /// Core cell stride of each included predictor.
    strides: Vec<usize>,
    lambda_concentration: f64,
    pub iteration: usize,
}

impl GibbsState {
    /// Prior draw of the parameters, and latent indicators drawn uniformly,
    /// or from `init_mixers` when given.
    pub fn initialize<R: Rng + ?Sized>(
        data: &Dataset,
        k: &ModelIndex,
        hp: &Hyperparams,
        init_mixers: Option<&[Mixer]>,
        rng: &mut R,
    ) -> Result<Self> {
        let shape = data.shape()?;
        let k = ModelIndex::new(k.as_slice().to_vec(), &shape)?;
        let included = k.included();
        let extents: Vec<usize> = included.iter().map(|&j| k.as_slice()[j]).collect();
        let cells = checked_core_cells(&extents)?;
        let d0 = shape.classes();

        let mixers: Vec<Mixer> = match init_mixers {
            Some(ms) => {
                if ms.len() != shape.predictors() {
                    return Err(Error::ShapeMismatch(format!(
                        "{} initial mixers for {} predictors",
                        ms.len(),
                        shape.predictors()
                    )));
                }
                for (j, m) in ms.iter().enumerate() {
                    if m.levels() != shape.dims()[j] || m.classes() != k.as_slice()[j] {
                        return Err(Error::ShapeMismatch(format!("initial mixer {j} has the wrong shape")));
                    }
                }
                ms.to_vec()
            }
            None => (0..shape.predictors())
                .map(|j| sample_mixer_prior(rng, k.as_slice()[j], shape.dims()[j]))
                .collect(),
        };
        let mut core = vec![0.0; cells * d0];
        for c in core.chunks_exact_mut(d0) {
            sample_symmetric_dirichlet(rng, hp.lambda_concentration, c);
        }

        let m = included.len();
        let n = data.len();
        let mut z = vec![0u16; n * m];
        for i in 0..n {
            let row = data.row(i);
            for (t, &j) in included.iter().enumerate() {
                z[i * m + t] = if init_mixers.is_some() {
                    draw_categorical(rng, mixers[j].row(row[j] as usize))? as u16
                } else {
                    rng.random_range(0..extents[t]) as u16
                };
            }
        }
        let params = TensorParams::from_parts(shape, k, core, mixers);
        Ok(GibbsState::assemble(params, z, hp.lambda_concentration))
    }

    /// State with given parameters and latent indicators (`n x m`, over the
    /// included predictors).
    pub fn from_parts(params: TensorParams, z: Vec<usize>, data: &Dataset, hp: &Hyperparams) -> Result<Self> {
        if params.shape() != &data.shape()? {
            return Err(Error::ShapeMismatch("parameters do not match the data".into()));
        }
        let m = params.included().len();
        if z.len() != data.len() * m {
            return Err(Error::ShapeMismatch(format!(
                "{} latent values for {} rows and {m} included predictors",
                z.len(),
                data.len()
            )));
        }
        for (pos, &v) in z.iter().enumerate() {
            let t = pos % m.max(1);
            if v >= params.core_extents()[t] {
                return Err(Error::Validation(format!("latent value {v} out of range at {pos}")));
            }
        }
        let z = z.into_iter().map(|v| v as u16).collect();
        Ok(GibbsState::assemble(params, z, hp.lambda_concentration))
    }

    fn assemble(params: TensorParams, z: Vec<u16>, lambda_concentration: f64) -> Self {
        let extents = params.core_extents();
        let m = extents.len();
        let mut strides = vec![1usize; m];
        for t in (0..m.saturating_sub(1)).rev() {
            strides[t] = strides[t + 1] * extents[t + 1];
        }
        let n = if m == 0 { 0 } else { z.len() / m };
        let cell = (0..n)
            .map(|i| (0..m).map(|t| z[i * m + t] as usize * strides[t]).sum())
            .collect();
        GibbsState {
            params,
            z,
            cell,
            strides,
            lambda_concentration,
            iteration: 0,
        }
    }

    pub fn params(&self) -> &TensorParams {
        &self.params
    }

    /// Latent class of observation `i` for predictor `j` (0 when excluded).
    pub fn latent(&self, i: usize, j: usize) -> usize {
        let m = self.strides.len();
        match self.params.included().iter().position(|&t| t == j) {
            Some(t) => self.z[i * m + t] as usize,
            None => 0,
        }
    }

    /// Latent values over the included predictors, row-major.
    pub fn latent_included(&self) -> Vec<usize> {
        self.z.iter().map(|&v| v as usize).collect()
    }

    fn core_cell_of(&self, i: usize) -> usize {
        if self.strides.is_empty() {
            0
        } else {
            self.cell[i]
        }
    }
}

/// Step 1: every core vector from `Dirichlet(a + class counts of its cell)`.
pub fn update_core<R: Rng + ?Sized>(state: &mut GibbsState, data: &Dataset, rng: &mut R) {
    let d0 = data.classes();
    let cells = state.params.core_cells();
    let mut counts = vec![0.0; cells * d0];
    for i in 0..data.len() {
        counts[state.core_cell_of(i) * d0 + data.response(i)] += 1.0;
    }
    let a = state.lambda_concentration;
    counts.iter_mut().for_each(|c| *c += a);
    for c in 0..cells {
        sample_dirichlet(rng, &counts[c * d0..(c + 1) * d0], state.params.core_cell_mut(c));
    }
}

/// Step 2: every mixer row of an included predictor from
/// `Dirichlet(1/k_j + counts of z_ij over rows with x_ij = v)`.
pub fn update_mixers<R: Rng + ?Sized>(state: &mut GibbsState, data: &Dataset, rng: &mut R) {
    let m = state.strides.len();
    let included = state.params.included().to_vec();
    for (t, &j) in included.iter().enumerate() {
        let k = state.params.core_extents()[t];
        let levels = data.dims()[j];
        let mut alpha = vec![1.0 / k as f64; levels * k];
        for i in 0..data.len() {
            alpha[data.value(i, j) * k + state.z[i * m + t] as usize] += 1.0;
        }
        let mixer = state.params.mixer_mut(j);
        for v in 0..levels {
            sample_dirichlet(rng, &alpha[v * k..(v + 1) * k], mixer.row_mut(v));
        }
    }
}

/// Step 3: every `z_ij` from its multinomial conditional,
/// `P(z_ij = h) ∝ pi_h(x_ij) * lambda_{.., h, ..}(y_i)`. Observations are
/// swept in order, predictors in order within each observation.
pub fn update_latent<R: Rng + ?Sized>(state: &mut GibbsState, data: &Dataset, rng: &mut R) -> Result<()> {
    let m = state.strides.len();
    if m == 0 {
        return Ok(());
    }
    let d0 = data.classes();
    let included = state.params.included().to_vec();
    let kmax = state.params.core_extents().iter().copied().max().unwrap_or(1);
    let mut w = vec![0.0; kmax];
    for i in 0..data.len() {
        let y = data.response(i);
        let row = data.row(i);
        for (t, &j) in included.iter().enumerate() {
            let k = state.params.core_extents()[t];
            let stride = state.strides[t];
            let old = state.z[i * m + t] as usize;
            let base = state.cell[i] - old * stride;
            let pi = state.params.mixer(j).row(row[j] as usize);
            let core = state.params.core();
            for h in 0..k {
                w[h] = pi[h] * core[(base + h * stride) * d0 + y];
            }
            let h = draw_categorical(rng, &w[..k]).map_err(|_| {
                Error::Degenerate(format!("all latent weights are zero for row {i}, predictor {j}"))
            })?;
            state.z[i * m + t] = h as u16;
            state.cell[i] = base + h * stride;
        }
    }
    Ok(())
}

/// Index drawn with probability proportional to `w`.
pub(crate) fn draw_categorical<R: Rng + ?Sized>(rng: &mut R, w: &[f64]) -> Result<usize> {
    let total: f64 = w.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Degenerate("categorical weights sum to zero".into()));
    }
    let mut u = rng.random::<f64>() * total;
    for (h, &x) in w.iter().enumerate() {
        if u < x {
            return Ok(h);
        }
        u -= x;
    }
    // rounding left u just past the end; fall back to the last positive weight
    Ok(w.iter().rposition(|&x| x > 0.0).expect("positive total"))
}

/// One full scan: core, mixers, latent indicators.
pub fn sweep<R: Rng + ?Sized>(state: &mut GibbsState, data: &Dataset, rng: &mut R) -> Result<()> {
    update_core(state, data, rng);
    update_mixers(state, data, rng);
    update_latent(state, data, rng)?;
    state.iteration += 1;
    Ok(())
}

/// Runs a chain with fixed `k`. `init_mixers` seeds the latent indicators
/// from soft level assignments (used when handing off a selected model);
/// otherwise they start uniform.
pub fn run_gibbs(
    data: &Dataset,
    k: &ModelIndex,
    hp: &Hyperparams,
    config: &GibbsConfig,
    init_mixers: Option<&[Mixer]>,
) -> Result<FitResult> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("no training rows".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = GibbsState::initialize(data, k, hp, init_mixers, &mut rng)?;
    let mut draws = Vec::with_capacity(config.retained());
    for t in 0..config.iters {
        sweep(&mut state, data, &mut rng)?;
        if t >= config.burnin && (t - config.burnin + 1) % config.thin == 0 {
            draws.push(state.params.clone());
        }
    }
    Ok(FitResult {
        draws,
        iters: config.iters,
        burnin: config.burnin,
        thin: config.thin,
        seed: config.seed,
    })
}
