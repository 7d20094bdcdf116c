//! Seeded train/test splits and k-fold partitions.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::error::{Error, Result};

/// A seeded permutation of `0..n`, cut after the first `n_train` entries.
pub fn shuffle_split(n: usize, n_train: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n_train == 0 || n_train >= n {
        return Err(Error::InvalidInput(format!(
            "split of {n} rows leaves an empty side ({n_train} train)"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = idx.split_off(n_train);
    Ok((idx, test))
}

/// Random split with `floor(fraction * n)` training rows.
pub fn train_test_split(data: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidInput(format!("train fraction {fraction} not in (0, 1)")));
    }
    let n = data.len();
    let (train, test) = shuffle_split(n, (fraction * n as f64).floor() as usize, seed)?;
    Ok((data.subset(&train), data.subset(&test)))
}

/// Assigns `0..n` to `k` folds of near-equal size after a seeded shuffle.
/// The first `n % k` folds hold one extra element.
pub fn fold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > n {
        return Err(Error::InvalidInput(format!("cannot cut {n} rows into {k} folds")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        out.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(out)
}

/// `(train, test)` pairs for k-fold cross-validation.
pub fn k_folds(data: &Dataset, k: usize, seed: u64) -> Result<Vec<(Dataset, Dataset)>> {
    let folds = fold_indices(data.len(), k, seed)?;
    Ok((0..k)
        .map(|f| {
            let train: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|&(g, _)| g != f)
                .flat_map(|(_, v)| v.iter().copied())
                .collect();
            (data.subset(&train), data.subset(&folds[f]))
        })
        .collect())
}
