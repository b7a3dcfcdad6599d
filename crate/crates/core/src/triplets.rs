//! Triplet constraint construction and train/test splitting.
//!
//! Each constraint picks a uniformly random anchor (with replacement) and
//! pairs it with its Euclidean nearest neighbour of the same class and its
//! nearest neighbour of any other class. Ties go to the lowest index.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{DmlError, Result};
pub use crate::loss::Triplet;

/// RNG stream reserved for anchor sampling.
const ANCHOR_STREAM: u64 = 0;
const SPLIT_STREAM: u64 = 3;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lazily filled nearest same-class / other-class neighbour table.
struct NeighborIndex<'a> {
    data: &'a Dataset,
    cache: Vec<Option<(Option<usize>, usize)>>,
}

impl<'a> NeighborIndex<'a> {
    fn new(data: &'a Dataset) -> Self {
        NeighborIndex {
            data,
            cache: vec![None; data.len()],
        }
    }

    /// `(same-class neighbour if any, other-class neighbour)` of `i`.
    fn neighbors(&mut self, i: usize) -> (Option<usize>, usize) {
        if let Some(hit) = self.cache[i] {
            return hit;
        }
        let xi = self.data.row(i);
        let yi = self.data.label(i);
        let mut same: Option<(f64, usize)> = None;
        let mut other: Option<(f64, usize)> = None;
        for c in 0..self.data.len() {
            if c == i {
                continue;
            }
            let d = sq_dist(xi, self.data.row(c));
            let slot = if self.data.label(c) == yi { &mut same } else { &mut other };
            // Strict comparison keeps the lowest index on ties.
            if slot.is_none_or(|(best, _)| d < best) {
                *slot = Some((d, c));
            }
        }
        let hit = (
            same.map(|(_, c)| c),
            other.expect("at least two classes checked by caller").1,
        );
        self.cache[i] = Some(hit);
        hit
    }
}

/// Draws `n_constraints` triplets, deterministic in `seed`.
pub fn generate_triplets(data: &Dataset, n_constraints: usize, seed: u64) -> Result<Vec<Triplet>> {
    if n_constraints == 0 {
        return Ok(Vec::new());
    }
    if data.distinct_classes() < 2 {
        return Err(DmlError::DegenerateLabels);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(ANCHOR_STREAM);
    let mut index = NeighborIndex::new(data);
    let n = data.len();
    let mut out = Vec::with_capacity(n_constraints);
    for _ in 0..n_constraints {
        let i = rng.random_range(0..n);
        match index.neighbors(i) {
            (Some(j), k) => out.push(Triplet { i, j, k }),
            (None, _) => {
                return Err(DmlError::SingletonClass {
                    class: data.label(i),
                })
            }
        }
    }
    Ok(out)
}

/// Random disjoint split with `ceil(fraction * n)` training rows. Each side
/// keeps the original row order.
pub fn split_train_test(data: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DmlError::BadFraction(train_fraction));
    }
    let (train_idx, test_idx) = split_indices(data.len(), train_fraction, seed)?;
    Ok((data.subset(&train_idx), data.subset(&test_idx)))
}

/// Index form of [`split_train_test`].
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    // The epsilon absorbs products like 0.7 * 10 = 7.000000000000001.
    let n_train = (train_fraction * n as f64 - 1e-9).ceil().max(0.0) as usize;
    if n_train == 0 || n_train >= n {
        return Err(DmlError::BadFraction(train_fraction));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SPLIT_STREAM);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Three integer columns `i,j,k`, one triplet per line, with a header.
pub fn format_triplets_csv(triplets: &[Triplet]) -> String {
    let mut out = String::from("i,j,k\n");
    for t in triplets {
        out.push_str(&format!("{},{},{}\n", t.i, t.j, t.k));
    }
    out
}

pub fn write_triplets_csv(triplets: &[Triplet], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_triplets_csv(triplets)).map_err(|source| DmlError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn parse_triplets_csv(text: &str) -> Result<Vec<Triplet>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.starts_with('i')) {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        let parse = |s: &str| {
            s.trim().parse::<usize>().map_err(|_| DmlError::Parse {
                line: lineno + 1,
                message: format!("bad index `{s}`"),
            })
        };
        if parts.len() != 3 {
            return Err(DmlError::Parse {
                line: lineno + 1,
                message: "expected three columns".into(),
            });
        }
        out.push(Triplet::new(parse(parts[0])?, parse(parts[1])?, parse(parts[2])?));
    }
    Ok(out)
}
