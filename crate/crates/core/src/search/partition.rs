//! Set partitions of the levels of one predictor, and the split/merge
//! proposal over them.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::MAX_LEVELS;
use crate::error::{Error, Result};

/// A partition of the levels `0..d` into blocks, stored as a restricted
/// growth string: `labels[v]` is the block of level `v`, and blocks are
/// numbered in order of their smallest level.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<usize>>", into = "Vec<Vec<usize>>")]
pub struct Partition {
    labels: Vec<u16>,
    blocks: usize,
}

impl TryFrom<Vec<Vec<usize>>> for Partition {
    type Error = Error;
    fn try_from(blocks: Vec<Vec<usize>>) -> Result<Self> {
        Partition::from_blocks(&blocks)
    }
}

impl From<Partition> for Vec<Vec<usize>> {
    fn from(p: Partition) -> Self {
        p.blocks()
    }
}

impl Partition {
    /// Everything in one block.
    pub fn single(levels: usize) -> Self {
        Partition {
            labels: vec![0; levels],
            blocks: 1,
        }
    }

    /// Every level in its own block.
    pub fn discrete(levels: usize) -> Self {
        Partition {
            labels: (0..levels as u16).collect(),
            blocks: levels,
        }
    }

    /// Partition induced by arbitrary block labels, relabelled canonically.
    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        if labels.is_empty() || labels.len() > MAX_LEVELS {
            return Err(Error::Validation(format!("cannot partition {} levels", labels.len())));
        }
        let mut map: Vec<(usize, u16)> = Vec::new();
        let mut out = Vec::with_capacity(labels.len());
        for &l in labels {
            let c = match map.iter().find(|(k, _)| *k == l) {
                Some(&(_, c)) => c,
                None => {
                    let c = map.len() as u16;
                    map.push((l, c));
                    c
                }
            };
            out.push(c);
        }
        Ok(Partition {
            labels: out,
            blocks: map.len(),
        })
    }

    pub fn from_blocks(blocks: &[Vec<usize>]) -> Result<Self> {
        let d: usize = blocks.iter().map(Vec::len).sum();
        if d == 0 || d > MAX_LEVELS {
            return Err(Error::Validation(format!("cannot partition {d} levels")));
        }
        let mut labels = vec![usize::MAX; d];
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::Validation("empty block".into()));
            }
            for &v in block {
                if v >= d || labels[v] != usize::MAX {
                    return Err(Error::Validation(format!("level {v} is out of range or repeated")));
                }
                labels[v] = b;
            }
        }
        Partition::from_labels(&labels)
    }

    pub fn levels(&self) -> usize {
        self.labels.len()
    }

    /// Number of blocks, the `k_j` this partition realizes.
    pub fn block_count(&self) -> usize {
        self.blocks
    }

    pub fn label(&self, level: usize) -> usize {
        self.labels[level] as usize
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    /// Blocks in canonical order, each sorted.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.blocks];
        for (v, &l) in self.labels.iter().enumerate() {
            out[l as usize].push(v);
        }
        out
    }

    /// Smallest level of every block; equal to the block's first appearance.
    pub fn block_mins(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.blocks);
        for (v, &l) in self.labels.iter().enumerate() {
            if l as usize == out.len() {
                out.push(v);
            }
        }
        out
    }

    /// Smallest level in the block of `level`.
    pub fn representative(&self, level: usize) -> usize {
        let l = self.labels[level];
        self.labels.iter().position(|&m| m == l).expect("block is nonempty")
    }

    /// Log of the number of distinct ways to split one block in two,
    /// `sum_b (2^(|b|-1) - 1)`. `-inf` when every block is a singleton.
    pub fn log_split_count(&self) -> f64 {
        log_sum_exp(self.block_sizes().into_iter().filter(|&m| m > 1).map(log_splits_of))
    }

    fn block_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.blocks];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }
}

/// `ln(2^(m-1) - 1)` for a block of size `m >= 2`.
fn log_splits_of(m: usize) -> f64 {
    let e = (m - 1) as f64;
    e * std::f64::consts::LN_2 + (-(0.5f64).powf(e)).ln_1p()
}

fn log_sum_exp(it: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = it.collect();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// 1-based text form, e.g. `{1,2}{3,4}`.
impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for block in self.blocks() {
            f.write_str("{")?;
            for (t, v) in block.iter().enumerate() {
                if t > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{}", v + 1)?;
            }
            f.write_str("}")?;
        }
        Ok(())
    }
}

impl FromStr for Partition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Validation(format!("malformed partition `{s}`"));
        let inner = s.strip_prefix('{').and_then(|t| t.strip_suffix('}')).ok_or_else(bad)?;
        let mut blocks = Vec::new();
        for part in inner.split("}{") {
            let block = part
                .split(',')
                .map(|t| match t.parse::<usize>() {
                    Ok(v) if v >= 1 => Ok(v - 1),
                    _ => Err(bad()),
                })
                .collect::<Result<Vec<_>>>()?;
            blocks.push(block);
        }
        Partition::from_blocks(&blocks)
    }
}

/// Every partition of `0..levels`, in restricted-growth-string order.
pub fn enumerate_partitions(levels: usize) -> Result<Vec<Partition>> {
    if levels == 0 || levels > 10 {
        return Err(Error::Capacity(format!("will not enumerate partitions of {levels} levels")));
    }
    let mut out = Vec::new();
    let mut rgs = vec![0u16; levels];
    let mut max = vec![0u16; levels];
    loop {
        let blocks = max[levels - 1] as usize + 1;
        out.push(Partition {
            labels: rgs.clone(),
            blocks,
        });
        // increment the last position that may still grow
        let mut t = levels - 1;
        loop {
            if t == 0 {
                return Ok(out);
            }
            let bound = max[t - 1] + 1;
            if rgs[t] < bound {
                rgs[t] += 1;
                max[t] = max[t - 1].max(rgs[t]);
                for s in t + 1..levels {
                    rgs[s] = 0;
                    max[s] = max[t];
                }
                break;
            }
            t -= 1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MoveKind {
    Split,
    Merge,
}

/// A candidate partition together with what it changes.
///
/// Every moved level leaves the block whose smallest level is `from` and
/// joins the block whose smallest level is `to`.
#[derive(Debug, Clone)]
pub struct Proposal {
    pub kind: MoveKind,
    pub candidate: Partition,
    pub moved: Vec<usize>,
    pub from: usize,
    pub to: usize,
    /// `ln q(current | candidate) - ln q(candidate | current)`.
    pub log_hastings: f64,
}

/// Probability of choosing to split when there are `k` of `d` blocks.
fn split_probability(k: usize, d: usize) -> f64 {
    if k == 1 {
        1.0
    } else if k == d {
        0.0
    } else {
        0.5
    }
}

fn ln_pairs(k: usize) -> f64 {
    ((k * (k - 1) / 2) as f64).ln()
}

/// Proposes one split or merge of `current`.
///
/// The direction is a fair coin except at the boundaries, where it is
/// forced. A split is uniform over all `sum_b (2^(|b|-1) - 1)` two-way splits
/// of a single block; a merge is uniform over the `k(k-1)/2` block pairs.
/// Returns `None` when there is no move, i.e. a single level.
pub fn propose_move<R: Rng + ?Sized>(current: &Partition, rng: &mut R) -> Option<Proposal> {
    let d = current.levels();
    let k = current.block_count();
    if d < 2 {
        return None;
    }
    let ps = split_probability(k, d);
    let split = ps == 1.0 || (ps > 0.0 && rng.random::<f64>() < ps);
    let mut labels = current.labels.clone();
    if split {
        let sizes = current.block_sizes();
        let lw: Vec<f64> = sizes
            .iter()
            .map(|&m| if m > 1 { log_splits_of(m) } else { f64::NEG_INFINITY })
            .collect();
        let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = lw.iter().map(|x| (x - max).exp()).collect();
        let b = crate::gibbs::draw_categorical(rng, &w).expect("a block has at least two levels");
        let members: Vec<usize> = (0..d).filter(|&v| labels[v] as usize == b).collect();
        // nonempty subset of the block without its smallest level
        let moved = loop {
            let s: Vec<usize> = members[1..].iter().copied().filter(|_| rng.random::<bool>()).collect();
            if !s.is_empty() {
                break s;
            }
        };
        for &v in &moved {
            labels[v] = k as u16;
        }
        let candidate = Partition::from_labels(&labels.iter().map(|&l| l as usize).collect::<Vec<_>>())
            .expect("valid labels");
        let forward = ps.ln() - current.log_split_count();
        let backward = (1.0 - split_probability(k + 1, d)).ln() - ln_pairs(k + 1);
        Some(Proposal {
            kind: MoveKind::Split,
            from: members[0],
            to: moved[0],
            moved,
            candidate,
            log_hastings: backward - forward,
        })
    } else {
        let a = rng.random_range(0..k);
        let mut b = rng.random_range(0..k - 1);
        if b >= a {
            b += 1;
        }
        // the later block joins the earlier one
        let (keep, absorb) = (a.min(b) as u16, a.max(b) as u16);
        let mins = current.block_mins();
        let moved: Vec<usize> = (0..d).filter(|&v| labels[v] == absorb).collect();
        for &v in &moved {
            labels[v] = keep;
        }
        let candidate = Partition::from_labels(&labels.iter().map(|&l| l as usize).collect::<Vec<_>>())
            .expect("valid labels");
        let forward = (1.0 - ps).ln() - ln_pairs(k);
        let backward = split_probability(k - 1, d).ln() - candidate.log_split_count();
        Some(Proposal {
            kind: MoveKind::Merge,
            from: mins[absorb as usize],
            to: mins[keep as usize],
            moved,
            candidate,
            log_hastings: backward - forward,
        })
    }
}
