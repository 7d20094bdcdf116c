//! Stage-one model search: a Metropolis-Hastings chain over hard clusterings
//! of every predictor's levels, scored by the collapsed marginal likelihood
//! of the responses.
//!
//! The target is `P(k) L(y | k, A)`: every partition `A` receives the prior
//! mass of the `k` it realizes. Each sweep proposes one split or merge per
//! predictor.

mod likelihood;
mod partition;
mod trace;

pub use likelihood::log_marginal_likelihood;
pub use partition::{enumerate_partitions, propose_move, MoveKind, Partition, Proposal};
pub use trace::{parse_rle, parse_trace_line, rle, summarize, InclusionSummary, SearchRecord, SearchTrace, TraceLine};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::priors::Hyperparams;
use likelihood::CellScore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Number of sweeps.
    pub iters: usize,
    pub burnin: usize,
    pub seed: u64,
}

impl SearchConfig {
    /// First half discarded.
    pub fn new(iters: usize, seed: u64) -> Self {
        SearchConfig {
            iters,
            burnin: iters / 2,
            seed,
        }
    }
}

/// Metropolis-Hastings accept step. The log acceptance ratio is
/// `candidate - current + log_prior_delta + log_hastings`; a ratio of at
/// least zero accepts without drawing, `-inf` rejects without drawing.
pub fn accept_move<R: Rng + ?Sized>(
    current: f64,
    candidate: f64,
    log_hastings: f64,
    log_prior_delta: f64,
    rng: &mut R,
) -> bool {
    let log_alpha = candidate - current + log_prior_delta + log_hastings;
    if log_alpha.is_nan() || log_alpha == f64::NEG_INFINITY {
        return false;
    }
    if log_alpha >= 0.0 {
        return true;
    }
    rng.random::<f64>().ln() < log_alpha
}

/// Cell counts keyed by a 64-bit hash of the included predictors' block
/// representatives.
#[derive(Debug, Clone)]
struct CellTable {
    d0: usize,
    slots: FxHashMap<u64, u32>,
    /// `d0` class counts per slot.
    counts: Vec<u32>,
    free: Vec<u32>,
}

impl CellTable {
    fn new(d0: usize) -> Self {
        CellTable {
            d0,
            slots: FxHashMap::default(),
            counts: Vec::new(),
            free: Vec::new(),
        }
    }

    fn get(&self, key: u64) -> Option<&[u32]> {
        self.slots
            .get(&key)
            .map(|&s| &self.counts[s as usize * self.d0..(s as usize + 1) * self.d0])
    }

    fn slot(&mut self, key: u64) -> usize {
        let d0 = self.d0;
        let next = self.counts.len() / d0;
        let s = *self.slots.entry(key).or_insert_with(|| match self.free.pop() {
            Some(s) => s,
            None => next as u32,
        });
        if s as usize == next {
            self.counts.extend(std::iter::repeat_n(0, d0));
        }
        s as usize
    }

    fn add(&mut self, key: u64, delta: &[u32]) {
        let s = self.slot(key);
        for (c, &v) in self.counts[s * self.d0..(s + 1) * self.d0].iter_mut().zip(delta) {
            *c += v;
        }
    }

    fn subtract(&mut self, key: u64, delta: &[u32]) {
        let s = self.slots[&key] as usize;
        let cell = &mut self.counts[s * self.d0..(s + 1) * self.d0];
        for (c, &v) in cell.iter_mut().zip(delta) {
            *c -= v;
        }
        if cell.iter().all(|&c| c == 0) {
            self.slots.remove(&key);
            self.free.push(s as u32);
        }
    }

    fn score(&self, scorer: &CellScore) -> f64 {
        // sorted so the sum does not depend on hash-map layout
        let mut keys: Vec<u64> = self.slots.keys().copied().collect();
        keys.sort_unstable();
        keys.iter().map(|&k| scorer.score(self.get(k).expect("live key"))).sum()
    }

    fn snapshot(&self) -> Vec<(u64, Vec<u32>)> {
        let mut v: Vec<(u64, Vec<u32>)> = self
            .slots
            .keys()
            .map(|&k| (k, self.get(k).expect("live key").to_vec()))
            .collect();
        v.sort_unstable();
        v
    }
}

/// Moved observations of a proposal grouped by their current cell.
#[derive(Default)]
struct Groups {
    index: FxHashMap<u64, usize>,
    keys: Vec<u64>,
    counts: Vec<u32>,
}

impl Groups {
    fn clear(&mut self) {
        self.index.clear();
        self.keys.clear();
        self.counts.clear();
    }

    fn add(&mut self, key: u64, y: usize, d0: usize) {
        let next = self.keys.len();
        let g = *self.index.entry(key).or_insert(next);
        if g == next {
            self.keys.push(key);
            self.counts.extend(std::iter::repeat_n(0, d0));
        }
        self.counts[g * d0 + y] += 1;
    }
}

struct Searcher<'a> {
    data: &'a Dataset,
    hp: &'a Hyperparams,
    d0: usize,
    /// `rows[j][v]`: observations with `x_ij = v`.
    rows: Vec<Vec<Vec<u32>>>,
    /// Random key of representative level `v` of predictor `j`; zero for
    /// level 0, so excluded predictors add nothing to a cell key.
    zobrist: Vec<Vec<u64>>,
    keys: Vec<u64>,
    table: CellTable,
    partitions: Vec<Partition>,
    included: usize,
    score: f64,
    scorer: CellScore,
    groups: Groups,
    scratch: Vec<u32>,
    proposals: usize,
}

impl<'a> Searcher<'a> {
    fn new(data: &'a Dataset, hp: &'a Hyperparams) -> Self {
        let d0 = data.classes();
        let mut rows: Vec<Vec<Vec<u32>>> = data.dims().iter().map(|&d| vec![Vec::new(); d]).collect();
        for i in 0..data.len() {
            for (j, &v) in data.row(i).iter().enumerate() {
                rows[j][v as usize].push(i as u32);
            }
        }
        // fixed seed: the keys only need to be distinct, and keeping them
        // off the chain's RNG leaves the chain independent of hashing
        let mut krng = ChaCha8Rng::seed_from_u64(0x7a0b_5157);
        let zobrist = data
            .dims()
            .iter()
            .map(|&d| (0..d).map(|v| if v == 0 { 0 } else { krng.random::<u64>() | 1 }).collect())
            .collect();
        let mut table = CellTable::new(d0);
        let mut one = vec![0u32; d0];
        for i in 0..data.len() {
            one[data.response(i)] = 1;
            table.add(0, &one);
            one[data.response(i)] = 0;
        }
        let scorer = CellScore::new(d0, hp.lambda_concentration, data.len());
        let score = table.score(&scorer);
        Searcher {
            data,
            hp,
            d0,
            rows,
            zobrist,
            keys: vec![0; data.len()],
            table,
            partitions: data.dims().iter().map(|&d| Partition::single(d)).collect(),
            included: 0,
            score,
            scorer,
            groups: Groups::default(),
            scratch: vec![0; d0],
            proposals: 0,
        }
    }

    fn log_prior_delta(&self, j: usize, prop: &Proposal) -> Result<f64> {
        let p = self.data.predictors();
        let k = self.partitions[j].block_count();
        let kc = prop.candidate.block_count();
        Ok(if k == 1 && kc > 1 {
            if self.included + 1 > self.hp.r_bar {
                f64::NEG_INFINITY
            } else {
                self.hp.log_inclusion_ratio(self.data.dims()[j], p)?
            }
        } else if k > 1 && kc == 1 {
            -self.hp.log_inclusion_ratio(self.data.dims()[j], p)?
        } else {
            0.0
        })
    }

    /// Change in log likelihood if the proposal were applied; fills `groups`.
    fn delta(&mut self, j: usize, prop: &Proposal) -> f64 {
        let d0 = self.d0;
        self.groups.clear();
        for &v in &prop.moved {
            for &i in &self.rows[j][v] {
                let i = i as usize;
                self.groups.add(self.keys[i], self.data.response(i), d0);
            }
        }
        let shift = self.zobrist[j][prop.to].wrapping_sub(self.zobrist[j][prop.from]);
        let mut delta = 0.0;
        for (g, &key) in self.groups.keys.iter().enumerate() {
            let moved = &self.groups.counts[g * d0..(g + 1) * d0];
            let source = self.table.get(key).expect("moved rows live in a cell");
            let target = self.table.get(key.wrapping_add(shift));
            let s_moved = self.scorer.score(moved);
            match prop.kind {
                MoveKind::Split => {
                    debug_assert!(target.is_none());
                    for ((o, &s), &m) in self.scratch.iter_mut().zip(source).zip(moved) {
                        *o = s - m;
                    }
                    delta += self.scorer.score(&self.scratch) + s_moved - self.scorer.score(source);
                }
                MoveKind::Merge => {
                    debug_assert_eq!(source, moved);
                    let t = target.unwrap_or(&[]);
                    for (y, o) in self.scratch.iter_mut().enumerate() {
                        *o = moved[y] + t.get(y).copied().unwrap_or(0);
                    }
                    delta += self.scorer.score(&self.scratch) - self.scorer.score(t) - s_moved;
                }
            }
        }
        delta
    }

    fn apply(&mut self, j: usize, prop: Proposal, delta: f64) {
        let d0 = self.d0;
        let shift = self.zobrist[j][prop.to].wrapping_sub(self.zobrist[j][prop.from]);
        for g in 0..self.groups.keys.len() {
            let key = self.groups.keys[g];
            let moved = &self.groups.counts[g * d0..(g + 1) * d0];
            self.table.subtract(key, moved);
            self.table.add(key.wrapping_add(shift), moved);
        }
        for &v in &prop.moved {
            for &i in &self.rows[j][v] {
                let k = &mut self.keys[i as usize];
                *k = k.wrapping_add(shift);
            }
        }
        let (k, kc) = (self.partitions[j].block_count(), prop.candidate.block_count());
        if k == 1 && kc > 1 {
            self.included += 1;
        } else if k > 1 && kc == 1 {
            self.included -= 1;
        }
        self.partitions[j] = prop.candidate;
        self.score += delta;
    }

    fn step<R: Rng + ?Sized>(&mut self, j: usize, rng: &mut R) -> Result<bool> {
        self.proposals += 1;
        let Some(prop) = propose_move(&self.partitions[j], rng) else {
            return Ok(false);
        };
        let prior = self.log_prior_delta(j, &prop)?;
        if prior == f64::NEG_INFINITY {
            return Ok(false);
        }
        let delta = self.delta(j, &prop);
        let accepted = accept_move(self.score, self.score + delta, prop.log_hastings, prior, rng);
        if accepted {
            self.apply(j, prop, delta);
        }
        if cfg!(debug_assertions) && self.proposals % 1000 == 0 {
            self.check_counts();
        }
        Ok(accepted)
    }

    /// Recount from scratch and compare with the incremental table.
    fn check_counts(&self) {
        let included: Vec<usize> = (0..self.partitions.len())
            .filter(|&j| self.partitions[j].block_count() > 1)
            .collect();
        let mut fresh = CellTable::new(self.d0);
        let mut one = vec![0u32; self.d0];
        for i in 0..self.data.len() {
            let key = included.iter().fold(0u64, |acc, &j| {
                let rep = self.partitions[j].representative(self.data.value(i, j));
                acc.wrapping_add(self.zobrist[j][rep])
            });
            assert_eq!(key, self.keys[i], "cell key of row {i} drifted");
            one[self.data.response(i)] = 1;
            fresh.add(key, &one);
            one[self.data.response(i)] = 0;
        }
        assert_eq!(fresh.snapshot(), self.table.snapshot(), "cell table drifted");
        assert_eq!(included.len(), self.included);
    }
}

/// Runs the search from the null model for `config.iters` sweeps.
pub fn run_search(data: &Dataset, hp: &Hyperparams, config: &SearchConfig) -> Result<SearchTrace> {
    if config.iters <= config.burnin {
        return Err(Error::Config(format!(
            "sweeps ({}) must exceed burn-in ({})",
            config.iters, config.burnin
        )));
    }
    let p = data.predictors();
    if p == 0 {
        return Err(Error::InvalidInput("no predictors to search over".into()));
    }
    hp.validate(p)?;
    if hp.r >= p as f64 {
        return Err(Error::Config(format!("r = {} must be below p = {p}", hp.r)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut s = Searcher::new(data, hp);
    let mut records = Vec::with_capacity(config.iters * p);
    for t in 0..config.iters {
        for j in 0..p {
            let accepted = s.step(j, &mut rng)?;
            records.push(SearchRecord {
                sweep: t as u32,
                predictor: j as u32,
                k: s.partitions[j].block_count() as u16,
                log_likelihood: s.score,
                accepted,
                partition: accepted.then(|| s.partitions[j].clone()),
            });
        }
        // clear accumulated rounding once per sweep
        s.score = s.table.score(&s.scorer);
    }
    Ok(SearchTrace {
        seed: config.seed,
        sweeps: config.iters,
        levels: data.dims().to_vec(),
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::log_prior_k;
    use crate::tensor::ModelIndex;

    fn hp(r: f64, r_bar: usize) -> Hyperparams {
        Hyperparams {
            r,
            r_bar,
            lambda_concentration: 0.5,
        }
    }

    #[test]
    fn accept_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(accept_move(-3.0, -3.0, 0.0, 0.0, &mut rng));
        assert!(accept_move(0.0, 2f64.ln(), 0.0, 0.0, &mut rng));
        assert!(!accept_move(0.0, 100.0, 0.0, f64::NEG_INFINITY, &mut rng));
        let n = 100_000;
        let hits = (0..n).filter(|_| accept_move(0.0, 0.25f64.ln(), 0.0, 0.0, &mut rng)).count();
        assert!((hits as f64 / n as f64 - 0.25).abs() < 0.01);
    }

    #[test]
    fn accept_consumes_no_randomness_when_certain() {
        let mut a = ChaCha8Rng::seed_from_u64(2);
        let b = a.clone();
        accept_move(0.0, 1.0, 0.0, 0.0, &mut a);
        accept_move(0.0, 1.0, 0.0, f64::NEG_INFINITY, &mut a);
        assert_eq!(a, b);
    }

    fn random_data(seed: u64, n: usize, dims: &[usize], signal: impl Fn(&[usize]) -> f64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<usize>> = (0..n)
            .map(|_| dims.iter().map(|&d| rng.random_range(0..d)).collect())
            .collect();
        let y = rows.iter().map(|r| usize::from(rng.random::<f64>() < signal(r))).collect();
        Dataset::from_indices(2, dims, y, rows).unwrap()
    }

    #[test]
    fn running_score_matches_from_scratch() {
        let data = random_data(3, 60, &[3, 4, 2, 3], |r| if r[1] < 2 { 0.8 } else { 0.2 });
        let h = hp(1.5, 4);
        let trace = run_search(&data, &h, &SearchConfig::new(60, 4)).unwrap();
        trace.replay(|t, state| {
            let want = log_marginal_likelihood(&data, state, 0.5).unwrap();
            let got = trace.records[(t + 1) * 4 - 1].log_likelihood;
            assert!((want - got).abs() < 1e-9, "sweep {t}: {got} vs {want}");
        });
    }

    #[test]
    fn seeded_runs_are_identical() {
        let data = random_data(5, 40, &[3, 3, 2], |r| if r[0] == 1 { 0.9 } else { 0.3 });
        let h = hp(1.0, 2);
        let a = run_search(&data, &h, &SearchConfig::new(30, 11)).unwrap();
        let b = run_search(&data, &h, &SearchConfig::new(30, 11)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records.len(), 30 * 3);
    }

    #[test]
    fn cap_is_never_exceeded() {
        let data = random_data(6, 50, &[2; 6], |r| 0.1 + 0.8 * ((r[0] ^ r[1] ^ r[2]) as f64));
        let h = hp(1.0, 1);
        let trace = run_search(&data, &h, &SearchConfig::new(200, 12)).unwrap();
        trace.replay(|_, state| {
            assert!(state.iter().filter(|p| p.block_count() > 1).count() <= 1);
        });
    }

    /// Exhaustive posterior over every joint clustering.
    fn exact_posterior(data: &Dataset, h: &Hyperparams) -> Vec<(Vec<Partition>, f64)> {
        let per: Vec<Vec<Partition>> = data.dims().iter().map(|&d| enumerate_partitions(d).unwrap()).collect();
        let mut states: Vec<Vec<Partition>> = vec![Vec::new()];
        for opts in &per {
            states = states
                .into_iter()
                .flat_map(|s| {
                    opts.iter().map(move |o| {
                        let mut t = s.clone();
                        t.push(o.clone());
                        t
                    })
                })
                .collect();
        }
        let shape = data.shape().unwrap();
        let logw: Vec<f64> = states
            .iter()
            .map(|s| {
                let k = ModelIndex::new(s.iter().map(Partition::block_count).collect(), &shape).unwrap();
                log_prior_k(&k, data.dims(), h).unwrap() + log_marginal_likelihood(data, s, 0.5).unwrap()
            })
            .collect();
        let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logw.iter().map(|w| (w - max).exp()).sum();
        states
            .into_iter()
            .zip(logw)
            .map(|(s, w)| (s, (w - max).exp() / z))
            .collect()
    }

    fn empirical_tv(data: &Dataset, h: &Hyperparams, sweeps: usize, seed: u64) -> f64 {
        let exact = exact_posterior(data, h);
        let trace = run_search(data, h, &SearchConfig { iters: sweeps, burnin: 0, seed }).unwrap();
        let mut freq: FxHashMap<Vec<Partition>, usize> = FxHashMap::default();
        trace.replay(|_, state| *freq.entry(state.to_vec()).or_default() += 1);
        exact
            .iter()
            .map(|(s, w)| (freq.get(s).copied().unwrap_or(0) as f64 / sweeps as f64 - w).abs())
            .sum::<f64>()
            / 2.0
    }

    #[test]
    fn flat_likelihood_recovers_prior_on_partitions() {
        // no rows: every clustering scores zero, so the chain samples the prior
        for d in [3, 4] {
            let data = Dataset::from_indices(2, &[d], vec![], vec![]).unwrap();
            let tv = empirical_tv(&data, &hp(0.5, 1), 200_000, 20 + d as u64);
            assert!(tv < 0.01, "d = {d}: tv = {tv}");
        }
    }

    #[test]
    fn two_binary_predictors_match_enumeration() {
        let data = random_data(7, 10, &[2, 2], |r| if r[0] == 1 { 0.85 } else { 0.2 });
        let tv = empirical_tv(&data, &hp(1.0, 2), 100_000, 8);
        assert!(tv < 0.02, "tv = {tv}");
    }

    #[test]
    fn two_ternary_predictors_match_enumeration() {
        let data = random_data(9, 30, &[3, 3], |r| [0.1, 0.5, 0.9][r[1]]);
        let tv = empirical_tv(&data, &hp(1.0, 2), 100_000, 10);
        assert!(tv < 0.02, "tv = {tv}");
    }

    #[test]
    fn rejects_bad_configuration() {
        let data = random_data(1, 10, &[2, 2], |_| 0.5);
        assert!(run_search(&data, &hp(1.0, 2), &SearchConfig { iters: 5, burnin: 5, seed: 0 }).is_err());
        assert!(run_search(&data, &hp(2.0, 2), &SearchConfig::new(5, 0)).is_err());
    }
}
