//! Shared fixtures for the criterion benchmarks.

use sgdml::data::make_synthetic;
use sgdml::triplets::generate_triplets;
use sgdml::{Dataset, MetricMatrix, Triplet};

/// The standard desk-scale problem: 3 classes, 10 signal and `noise_dims`
/// nuisance coordinates, 100 points per class.
pub fn fixture(dim: usize, noise_dims: usize, n_triplets: usize) -> (Dataset, Vec<Triplet>) {
    let data = make_synthetic(3, dim, 100, noise_dims, 1).expect("valid recipe");
    let triplets = generate_triplets(&data, n_triplets, 2).expect("three classes");
    (data, triplets)
}

/// Deterministic symmetric matrix with mixed-sign spectrum.
pub fn symmetric(dim: usize) -> MetricMatrix {
    let mut m = MetricMatrix::zeros(dim);
    for a in 0..dim {
        for b in a..dim {
            let v = ((a * 31 + b * 17) % 13) as f64 / 6.5 - 1.0;
            m.set(a, b, v);
            m.set(b, a, v);
        }
    }
    m
}
