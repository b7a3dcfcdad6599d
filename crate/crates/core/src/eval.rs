//! k-nearest-neighbour classification under a learned metric.
//!
//! Neighbours are ranked by squared Mahalanobis distance with ties broken by
//! lower training index. A vote tie goes to the tied class with the smallest
//! summed distance, then to the lowest class id.

use rayon::prelude::*;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{DmlError, Result};
use crate::linalg::MetricMatrix;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    pub error_rate: f64,
    pub n_test: usize,
    pub k: usize,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

impl EvalResult {
    pub fn error_percent(&self) -> f64 {
        100.0 * self.error_rate
    }
}

fn check(metric: &MetricMatrix, train: &Dataset, dim: usize, k: usize) -> Result<()> {
    if metric.dim() != train.dim() {
        return Err(DmlError::DimMismatch {
            expected: train.dim(),
            found: metric.dim(),
        });
    }
    if dim != train.dim() {
        return Err(DmlError::DimMismatch {
            expected: train.dim(),
            found: dim,
        });
    }
    if k == 0 || k > train.len() {
        return Err(DmlError::InvalidConfig(format!(
            "k = {k} must lie in [1, {}]",
            train.len()
        )));
    }
    Ok(())
}

fn predict_unchecked(metric: &MetricMatrix, train: &Dataset, query: &[f64], k: usize, diff: &mut [f64]) -> usize {
    let mut dists: Vec<(f64, usize)> = (0..train.len())
        .map(|i| {
            for ((d, a), b) in diff.iter_mut().zip(query).zip(train.row(i)) {
                *d = a - b;
            }
            (metric.quad_form(diff), i)
        })
        .collect();
    let by_rank = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < dists.len() {
        dists.select_nth_unstable_by(k - 1, by_rank);
        dists.truncate(k);
    }
    dists.sort_unstable_by(by_rank);

    let classes = train.class_count();
    let mut votes = vec![0usize; classes];
    let mut summed = vec![0.0f64; classes];
    for &(d, i) in &dists {
        let c = train.label(i);
        votes[c] += 1;
        summed[c] += d;
    }
    let mut best = 0;
    for c in 1..classes {
        let better = votes[c] > votes[best] || (votes[c] == votes[best] && summed[c] < summed[best]);
        if better {
            best = c;
        }
    }
    best
}

/// Majority label among the `k` training points nearest to `query`.
pub fn knn_predict(metric: &MetricMatrix, train: &Dataset, query: &[f64], k: usize) -> Result<usize> {
    check(metric, train, query.len(), k)?;
    let mut diff = vec![0.0; train.dim()];
    Ok(predict_unchecked(metric, train, query, k, &mut diff))
}

/// Predicts every test point (in parallel) and tallies the confusion matrix.
pub fn classification_error(metric: &MetricMatrix, train: &Dataset, test: &Dataset, k: usize) -> Result<EvalResult> {
    check(metric, train, test.dim(), k)?;
    if test.is_empty() {
        return Err(DmlError::EmptyDataset);
    }
    let predictions: Vec<usize> = (0..test.len())
        .into_par_iter()
        .map_init(
            || vec![0.0; train.dim()],
            |diff, i| predict_unchecked(metric, train, test.row(i), k, diff),
        )
        .collect();
    let classes = train.class_count().max(test.class_count());
    let mut confusion = vec![vec![0usize; classes]; classes];
    let mut correct = 0;
    for (i, &p) in predictions.iter().enumerate() {
        let truth = test.label(i);
        confusion[truth][p] += 1;
        if truth == p {
            correct += 1;
        }
    }
    Ok(EvalResult {
        error_rate: (test.len() - correct) as f64 / test.len() as f64,
        n_test: test.len(),
        k,
        confusion,
    })
}
