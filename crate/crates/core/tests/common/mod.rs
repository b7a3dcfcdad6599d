//! Independent reference implementations used as test oracles. Nothing
//! here calls into the solver code paths it is meant to check.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use sgdml::{Dataset, LossKind, MetricMatrix, Triplet};

pub fn to_nalgebra(m: &MetricMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.dim(), m.dim(), m.as_slice())
}

/// Ascending eigenvalues from nalgebra's symmetric solver.
pub fn eigenvalues(m: &MetricMatrix) -> Vec<f64> {
    let mut v: Vec<f64> = to_nalgebra(m).symmetric_eigen().eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn random_symmetric<R: Rng>(rng: &mut R, d: usize, scale: f64) -> MetricMatrix {
    let mut m = MetricMatrix::zeros(d);
    for i in 0..d {
        for j in i..d {
            let v = scale * rng.random_range(-1.0..1.0);
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    m
}

/// Squared distance from `m` to the nearest member of
/// `{X PSD, ||X||_F <= radius}` computed on nalgebra's spectrum: clamp the
/// eigenvalues at zero, then shrink the clamped vector into the ball.
pub fn domain_distance(m: &MetricMatrix, radius: f64) -> f64 {
    let lam = eigenvalues(m);
    let clamped: Vec<f64> = lam.iter().map(|&l| l.max(0.0)).collect();
    let norm = clamped.iter().map(|x| x * x).sum::<f64>().sqrt();
    let shrink = if norm > radius { radius / norm } else { 1.0 };
    lam.iter()
        .zip(&clamped)
        .map(|(l, c)| (l - c * shrink).powi(2))
        .sum::<f64>()
        .sqrt()
}

pub fn frob_diff(a: &MetricMatrix, b: &MetricMatrix) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `A_t = (x_i - x_k)(x_i - x_k)^T - (x_i - x_j)(x_i - x_j)^T`, built entry by entry.
pub fn explicit_a(t: &Triplet, data: &Dataset) -> Vec<f64> {
    let d = data.dim();
    let (xi, xj, xk) = (data.row(t.i), data.row(t.j), data.row(t.k));
    let mut a = vec![0.0; d * d];
    for r in 0..d {
        for c in 0..d {
            a[r * d + c] = (xi[r] - xk[r]) * (xi[c] - xk[c]) - (xi[r] - xj[r]) * (xi[c] - xj[c]);
        }
    }
    a
}

/// Trace inner product `<M, A_t>`.
pub fn trace_margin(m: &MetricMatrix, t: &Triplet, data: &Dataset) -> f64 {
    m.as_slice().iter().zip(explicit_a(t, data)).map(|(x, y)| x * y).sum()
}

/// Closed-form smooth hinge, written without any overflow guard (fine for
/// the moderate arguments used in tests).
pub fn naive_smooth(l: f64, z: f64) -> f64 {
    (1.0 + (-l * (z - 1.0)).exp()).ln() / l
}

pub fn naive_loss(kind: LossKind, z: f64) -> f64 {
    match kind {
        LossKind::Smooth { l } => naive_smooth(l, z),
        LossKind::Hinge => (1.0 - z).max(0.0),
    }
}

/// Sort-everything k-NN with the documented tie rules: rank by
/// `(distance, index)`, vote, break vote ties by smaller summed distance
/// and then lower class id.
pub fn knn_oracle(metric: &MetricMatrix, train: &Dataset, query: &[f64], k: usize) -> usize {
    let d = train.dim();
    let mut all: Vec<(f64, usize)> = (0..train.len())
        .map(|i| {
            let diff: Vec<f64> = query.iter().zip(train.row(i)).map(|(a, b)| a - b).collect();
            let mut s = 0.0;
            for r in 0..d {
                let mut row = 0.0;
                for c in 0..d {
                    row += metric.get(r, c) * diff[c];
                }
                s += diff[r] * row;
            }
            (s, i)
        })
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut tally: Vec<(usize, f64)> = vec![(0, 0.0); train.class_count()];
    for &(dist, i) in &all[..k] {
        tally[train.label(i)].0 += 1;
        tally[train.label(i)].1 += dist;
    }
    let mut order: Vec<usize> = (0..tally.len()).collect();
    order.sort_by(|&a, &b| {
        tally[b].0
            .cmp(&tally[a].0)
            .then(tally[a].1.total_cmp(&tally[b].1))
            .then(a.cmp(&b))
    });
    order[0]
}

/// Standard normal rows with labels from `labels`.
pub fn gaussian_dataset<R: Rng>(rng: &mut R, labels: Vec<usize>, dim: usize, classes: usize) -> Dataset {
    let n = labels.len();
    let features: Vec<f64> = (0..n * dim)
        .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect();
    Dataset::new(features, dim, labels, classes).unwrap()
}
