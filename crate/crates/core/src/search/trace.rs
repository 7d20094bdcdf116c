//! Search traces: per-proposal records, their line-delimited text form, and
//! the inclusion summary computed from them.
//!
//! Text form, one header line then one line per proposal:
//!
//! ```text
//! #tensorclass-trace	v1	seed=7	iters=1000	levels=4*600
//! 1	1	2*1,1*599	1:{1,2}{3,4}	-412.0339	1
//! ```
//!
//! Columns are sweep, predictor, the `k` vector run-length encoded as
//! `value*count`, the partitions of every included predictor (`-` when none),
//! the log marginal likelihood after the proposal, and `1` if it was
//! accepted. Sweeps, predictors and levels are 1-based.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use super::partition::Partition;
use crate::error::{Error, Result};

const MAGIC: &str = "#tensorclass-trace";
const VERSION: &str = "v1";

/// Outcome of one proposal.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchRecord {
    /// 0-based sweep.
    pub sweep: u32,
    pub predictor: u32,
    /// `k_j` after the proposal.
    pub k: u16,
    pub log_likelihood: f64,
    pub accepted: bool,
    /// New partition of the predictor, present exactly when accepted.
    pub partition: Option<Partition>,
}

/// Every proposal of a search run, starting from the null model.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchTrace {
    pub seed: u64,
    pub sweeps: usize,
    pub levels: Vec<usize>,
    pub records: Vec<SearchRecord>,
}

impl SearchTrace {
    pub fn predictors(&self) -> usize {
        self.levels.len()
    }

    /// Calls `f(sweep, partitions)` with the state at the end of every sweep.
    pub fn replay(&self, mut f: impl FnMut(usize, &[Partition])) {
        let p = self.predictors();
        let mut state: Vec<Partition> = self.levels.iter().map(|&d| Partition::single(d)).collect();
        if p == 0 {
            (0..self.sweeps).for_each(|t| f(t, &state));
            return;
        }
        for (t, chunk) in self.records.chunks(p).enumerate() {
            for r in chunk {
                if let Some(part) = &r.partition {
                    state[r.predictor as usize] = part.clone();
                }
            }
            f(t, &state);
        }
    }

    /// Fraction of proposals accepted.
    pub fn acceptance_rate(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().filter(|r| r.accepted).count() as f64 / self.records.len() as f64
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "{MAGIC}\t{VERSION}\tseed={}\titers={}\tlevels={}",
            self.seed,
            self.sweeps,
            rle(&self.levels)
        )?;
        let p = self.predictors();
        let mut state: Vec<Partition> = self.levels.iter().map(|&d| Partition::single(d)).collect();
        let mut k: Vec<usize> = vec![1; p];
        for r in &self.records {
            let j = r.predictor as usize;
            if let Some(part) = &r.partition {
                state[j] = part.clone();
                k[j] = part.block_count();
            }
            let parts: Vec<String> = (0..p)
                .filter(|&t| k[t] > 1)
                .map(|t| format!("{}:{}", t + 1, state[t]))
                .collect();
            let parts = if parts.is_empty() { "-".to_string() } else { parts.join(";") };
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}",
                r.sweep + 1,
                j + 1,
                rle(&k),
                parts,
                r.log_likelihood,
                u8::from(r.accepted)
            )?;
        }
        Ok(())
    }

    /// Reads the text form, checking that consecutive lines describe a
    /// consistent chain.
    pub fn read_text<R: BufRead>(reader: R) -> Result<SearchTrace> {
        let mut lines = reader.lines();
        let header = match lines.next() {
            Some(l) => l?,
            None => return Err(Error::parse(1, "missing trace header")),
        };
        let (seed, sweeps, levels) = parse_header(&header)?;
        let p = levels.len();
        let mut state: Vec<Partition> = levels.iter().map(|&d| Partition::single(d)).collect();
        let mut included = 0usize;
        let mut records = Vec::with_capacity(sweeps.saturating_mul(p).min(1 << 24));
        for (n, line) in lines.enumerate() {
            let lineno = n + 2;
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let rec = parse_trace_line(&line).map_err(|e| relocate(e, lineno))?;
            let expected = records.len();
            if p == 0 || rec.sweep != expected / p || rec.predictor != expected % p {
                return Err(Error::parse(lineno, "record out of sequence"));
            }
            if rec.k.len() != p {
                return Err(Error::parse(lineno, format!("k vector has {} entries, expected {p}", rec.k.len())));
            }
            // listed partitions must be exactly the included predictors, in
            // order; only the proposed one may differ from the current state
            let pred = rec.predictor;
            if rec.partitions.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(Error::parse(lineno, "partitions must be listed in predictor order"));
            }
            let mut candidate = Partition::single(levels[pred]);
            for (j, part) in &rec.partitions {
                if *j >= p || part.levels() != levels[*j] || part.block_count() < 2 {
                    return Err(Error::parse(lineno, format!("partition for predictor {} does not fit", j + 1)));
                }
                if *j == pred {
                    candidate = part.clone();
                } else if *part != state[*j] {
                    return Err(Error::parse(lineno, "a predictor other than the proposed one changed"));
                }
            }
            let was_in = usize::from(state[pred].block_count() > 1);
            let now_in = usize::from(candidate.block_count() > 1);
            if rec.partitions.len() != included + now_in - was_in {
                return Err(Error::parse(lineno, "listed partitions disagree with the included predictors"));
            }
            for j in 0..p {
                let blocks = if j == pred { candidate.block_count() } else { state[j].block_count() };
                if rec.k[j] != blocks {
                    return Err(Error::parse(lineno, format!("k and partition disagree for predictor {}", j + 1)));
                }
            }
            let changed = candidate != state[pred];
            if changed && !rec.accepted {
                return Err(Error::parse(lineno, "rejected proposal changed the state"));
            }
            if rec.accepted && !changed {
                return Err(Error::parse(lineno, "accepted proposal left the state unchanged"));
            }
            records.push(SearchRecord {
                sweep: rec.sweep as u32,
                predictor: rec.predictor as u32,
                k: rec.k[rec.predictor] as u16,
                log_likelihood: rec.log_likelihood,
                accepted: rec.accepted,
                partition: rec.accepted.then(|| candidate.clone()),
            });
            included = included + now_in - was_in;
            state[pred] = candidate;
        }
        if records.len() != sweeps * p {
            return Err(Error::parse(
                records.len() + 2,
                format!("trace has {} records, header promises {}", records.len(), sweeps * p),
            ));
        }
        Ok(SearchTrace {
            seed,
            sweeps,
            levels,
            records,
        })
    }
}

fn relocate(e: Error, line: usize) -> Error {
    match e {
        Error::Parse { message, .. } => Error::Parse { line, message },
        other => other,
    }
}

fn parse_header(h: &str) -> Result<(u64, usize, Vec<usize>)> {
    let f: Vec<&str> = h.split('\t').collect();
    if f.len() != 5 || f[0] != MAGIC {
        return Err(Error::parse(1, "not a trace header"));
    }
    if f[1] != VERSION {
        return Err(Error::parse(1, format!("unsupported trace version `{}`", f[1])));
    }
    let field = |s: &str, name: &str| -> Result<String> {
        s.strip_prefix(name)
            .and_then(|t| t.strip_prefix('='))
            .map(str::to_owned)
            .ok_or_else(|| Error::parse(1, format!("expected `{name}=`")))
    };
    let seed = field(f[2], "seed")?.parse().map_err(|_| Error::parse(1, "bad seed"))?;
    let sweeps = field(f[3], "iters")?.parse().map_err(|_| Error::parse(1, "bad iteration count"))?;
    let levels = parse_rle(&field(f[4], "levels")?).map_err(|e| relocate(e, 1))?;
    if levels.iter().any(|&d| d < 2 || d > crate::data::MAX_LEVELS) {
        return Err(Error::parse(1, "level counts must lie in 2..=65536"));
    }
    Ok((seed, sweeps, levels))
}

/// One parsed trace line, 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceLine {
    pub sweep: usize,
    pub predictor: usize,
    pub k: Vec<usize>,
    pub partitions: Vec<(usize, Partition)>,
    pub log_likelihood: f64,
    pub accepted: bool,
}

/// Parses a single record line.
pub fn parse_trace_line(line: &str) -> Result<TraceLine> {
    let f: Vec<&str> = line.split('\t').collect();
    if f.len() != 6 {
        return Err(Error::parse(0, format!("expected 6 fields, found {}", f.len())));
    }
    let one_based = |s: &str, what: &str| -> Result<usize> {
        match s.parse::<usize>() {
            Ok(v) if v >= 1 => Ok(v - 1),
            _ => Err(Error::parse(0, format!("bad {what} `{s}`"))),
        }
    };
    let sweep = one_based(f[0], "sweep")?;
    let predictor = one_based(f[1], "predictor")?;
    let k = parse_rle(f[2])?;
    if predictor >= k.len() {
        return Err(Error::parse(0, "predictor outside the k vector"));
    }
    let partitions = if f[3] == "-" {
        Vec::new()
    } else {
        f[3].split(';')
            .map(|item| {
                let (j, part) = item.split_once(':').ok_or_else(|| Error::parse(0, "bad partition entry"))?;
                let j = one_based(j, "predictor")?;
                let part: Partition = part.parse().map_err(|e: Error| Error::parse(0, e.to_string()))?;
                Ok((j, part))
            })
            .collect::<Result<Vec<_>>>()?
    };
    for (j, part) in &partitions {
        if *j >= k.len() || k[*j] != part.block_count() {
            return Err(Error::parse(0, format!("partition of predictor {} disagrees with k", j + 1)));
        }
    }
    let log_likelihood: f64 = f[4].parse().map_err(|_| Error::parse(0, format!("bad score `{}`", f[4])))?;
    if log_likelihood.is_nan() {
        return Err(Error::parse(0, "score is NaN"));
    }
    let accepted = match f[5] {
        "1" => true,
        "0" => false,
        s => return Err(Error::parse(0, format!("bad accepted flag `{s}`"))),
    };
    Ok(TraceLine {
        sweep,
        predictor,
        k,
        partitions,
        log_likelihood,
        accepted,
    })
}

/// `[1, 1, 2, 1]` becomes `1*2,2*1,1*1`.
pub fn rle(v: &[usize]) -> String {
    let mut out = String::new();
    let mut t = 0;
    while t < v.len() {
        let mut e = t;
        while e < v.len() && v[e] == v[t] {
            e += 1;
        }
        if !out.is_empty() {
            out.push(',');
        }
        out.push_str(&format!("{}*{}", v[t], e - t));
        t = e;
    }
    out
}

/// Inverse of [`rle`]. Total length is capped at ten million entries.
pub fn parse_rle(s: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    if s.is_empty() {
        return Ok(out);
    }
    for run in s.split(',') {
        let bad = || Error::parse(0, format!("bad run `{run}`"));
        let (v, c) = run.split_once('*').ok_or_else(bad)?;
        let v: usize = v.parse().map_err(|_| bad())?;
        let c: usize = c.parse().map_err(|_| bad())?;
        if c == 0 || out.len() + c > 10_000_000 {
            return Err(bad());
        }
        out.extend(std::iter::repeat_n(v, c));
    }
    Ok(out)
}

/// Posterior inclusion frequencies and the median probability model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionSummary {
    /// Fraction of post burn-in sweeps with `k_j > 1`.
    pub frequencies: Vec<f64>,
    /// Predictors with frequency strictly above one half, ascending.
    pub selected: Vec<usize>,
    /// Most frequent partition of each selected predictor among the sweeps
    /// that included it, in the order of `selected`.
    pub modal: Vec<Partition>,
    pub sweeps: usize,
    pub burnin: usize,
}

impl InclusionSummary {
    pub fn modal_k(&self) -> Vec<usize> {
        self.modal.iter().map(Partition::block_count).collect()
    }
}

/// Inclusion summary over sweeps `burnin..`.
pub fn summarize(trace: &SearchTrace, burnin: usize) -> Result<InclusionSummary> {
    if burnin >= trace.sweeps {
        return Err(Error::Empty(format!(
            "burn-in of {burnin} leaves no sweeps out of {}",
            trace.sweeps
        )));
    }
    let p = trace.predictors();
    let mut counts = vec![0usize; p];
    let mut partitions: FxHashMap<usize, BTreeMap<Partition, usize>> = FxHashMap::default();
    trace.replay(|t, state| {
        if t < burnin {
            return;
        }
        for (j, part) in state.iter().enumerate() {
            if part.block_count() > 1 {
                counts[j] += 1;
                *partitions.entry(j).or_default().entry(part.clone()).or_default() += 1;
            }
        }
    });
    let window = (trace.sweeps - burnin) as f64;
    let frequencies: Vec<f64> = counts.iter().map(|&c| c as f64 / window).collect();
    let selected: Vec<usize> = (0..p).filter(|&j| 2 * counts[j] > trace.sweeps - burnin).collect();
    let modal = selected
        .iter()
        .map(|j| {
            // highest count; ties to fewer blocks, then canonical order
            partitions[j]
                .iter()
                .max_by(|(a, ca), (b, cb)| {
                    ca.cmp(cb)
                        .then(b.block_count().cmp(&a.block_count()))
                        .then(b.cmp(a))
                })
                .map(|(part, _)| part.clone())
                .expect("selected predictors were included")
        })
        .collect();
    Ok(InclusionSummary {
        frequencies,
        selected,
        modal,
        sweeps: trace.sweeps,
        burnin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(sweep: u32, predictor: u32, k: u16, part: Option<&str>, ll: f64) -> SearchRecord {
        let partition: Option<Partition> = part.map(|s| s.parse().unwrap());
        SearchRecord {
            sweep,
            predictor,
            k,
            log_likelihood: ll,
            accepted: partition.is_some(),
            partition,
        }
    }

    fn sample_trace() -> SearchTrace {
        // p = 2, d = (3, 2); predictor 0 joins in sweep 0, leaves in sweep 2
        SearchTrace {
            seed: 5,
            sweeps: 4,
            levels: vec![3, 2],
            records: vec![
                record(0, 0, 2, Some("{1,2}{3}"), -3.5),
                record(0, 1, 1, None, -3.5),
                record(1, 0, 2, None, -3.5),
                record(1, 1, 2, Some("{1}{2}"), -3.0),
                record(2, 0, 1, Some("{1,2,3}"), -3.25),
                record(2, 1, 2, None, -3.25),
                record(3, 0, 1, None, -3.25),
                record(3, 1, 2, None, -3.25),
            ],
        }
    }

    #[test]
    fn text_round_trip() {
        let t = sample_trace();
        let mut buf = Vec::new();
        t.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("#tensorclass-trace\tv1\tseed=5\titers=4\tlevels=3*1,2*1\n"));
        assert!(text.contains("\n2\t2\t2*2\t1:{1,2}{3};2:{1}{2}\t-3\t1\n"));
        assert_eq!(SearchTrace::read_text(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn inconsistent_traces_are_rejected() {
        let mut buf = Vec::new();
        sample_trace().write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        // claim the first proposal was rejected although the state changed
        let bad = text.replacen("1:{1,2}{3}\t-3.5\t1", "1:{1,2}{3}\t-3.5\t0", 1);
        assert!(SearchTrace::read_text(bad.as_bytes()).is_err());
        let truncated: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
        assert!(SearchTrace::read_text(truncated.as_bytes()).is_err());
    }

    #[test]
    fn line_parser_rejects_garbage() {
        for bad in [
            "",
            "1\t1\t1*2\t-\t0.0",
            "0\t1\t1*2\t-\t0.0\t1",
            "1\t3\t1*2\t-\t0.0\t1",
            "1\t1\t2*1,1*1\t1:{1}{2}{3}\t0.0\t1",
            "1\t1\t1*2\t-\tNaN\t1",
            "1\t1\t1*2\t-\t0.0\tyes",
            "1\t1\t1*0\t-\t0.0\t1",
        ] {
            assert!(parse_trace_line(bad).is_err(), "{bad:?}");
        }
        let ok = parse_trace_line("3\t2\t1*1,3*1\t2:{1}{2,4}{3}\t-1.5\t0").unwrap();
        assert_eq!(ok.k, vec![1, 3]);
        assert_eq!((ok.sweep, ok.predictor), (2, 1));
    }

    #[test]
    fn rle_round_trip() {
        let v = vec![1, 1, 1, 4, 2, 2, 1];
        assert_eq!(rle(&v), "1*3,4*1,2*2,1*1");
        assert_eq!(parse_rle(&rle(&v)).unwrap(), v);
        assert_eq!(rle(&[]), "");
    }

    #[test]
    fn summary_counts_sweeps() {
        let s = summarize(&sample_trace(), 0).unwrap();
        assert_eq!(s.frequencies, vec![0.5, 0.75]);
        // exactly one half is not enough
        assert_eq!(s.selected, vec![1]);
        assert_eq!(s.modal, vec![Partition::discrete(2)]);
        let late = summarize(&sample_trace(), 2).unwrap();
        assert_eq!(late.frequencies, vec![0.0, 1.0]);
        assert!(summarize(&sample_trace(), 4).is_err());
    }

    #[test]
    fn constant_trace_gives_zero_one_frequencies() {
        let t = SearchTrace {
            seed: 0,
            sweeps: 3,
            levels: vec![2, 2],
            records: vec![
                record(0, 0, 2, Some("{1}{2}"), 0.0),
                record(0, 1, 1, None, 0.0),
                record(1, 0, 2, None, 0.0),
                record(1, 1, 1, None, 0.0),
                record(2, 0, 2, None, 0.0),
                record(2, 1, 1, None, 0.0),
            ],
        };
        let s = summarize(&t, 1).unwrap();
        assert_eq!(s.frequencies, vec![1.0, 0.0]);
        assert_eq!(s.selected, vec![0]);
    }

    #[test]
    fn modal_ties_prefer_fewer_blocks() {
        let t = SearchTrace {
            seed: 0,
            sweeps: 4,
            levels: vec![3],
            records: vec![
                record(0, 0, 3, Some("{1}{2}{3}"), 0.0),
                record(1, 0, 3, None, 0.0),
                record(2, 0, 2, Some("{1,3}{2}"), 0.0),
                record(3, 0, 2, None, 0.0),
            ],
        };
        let s = summarize(&t, 0).unwrap();
        assert_eq!(s.modal, vec!["{1,3}{2}".parse().unwrap()]);
    }
}
