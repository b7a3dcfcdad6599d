//! Mahalanobis distance metric learning from triplet constraints.
//!
//! The metric `M` is learned by projected stochastic gradient descent over a
//! stream of triplets `(i, j, k)` asking `x_i` to be closer to `x_j` (same
//! class) than to `x_k` (other class). Every update must be followed by a
//! projection onto the PSD cone, which costs a full eigendecomposition, so the
//! variants in [`optim`] differ mainly in how many projections they perform:
//!
//! | variant  | update rule                                   |
//! |----------|-----------------------------------------------|
//! | `sgd`    | every triplet                                 |
//! | `mini`   | once per batch of `b` triplets                |
//! | `as`     | triplet `t` with probability `|l'(Delta_t)|`  |
//! | `hr`     | batch, probability from one random member     |
//! | `ha`     | batch, probability from the gradient norm     |
//!
//! ```
//! use sgdml::{data, eval, optim, triplets};
//!
//! let train = data::make_synthetic(3, 8, 30, 4, 1).unwrap();
//! let stream = triplets::generate_triplets(&train, 2_000, 7).unwrap();
//! let cfg = optim::TrainConfig {
//!     n_constraints: 2_000,
//!     ..optim::TrainConfig::for_algorithm(optim::Algorithm::MiniSgd)
//! };
//! let report = optim::train(&cfg, &stream, &train).unwrap();
//! assert_eq!(report.updates, 200);
//! let result = eval::classification_error(&report.averaged_metric, &train, &train, 3).unwrap();
//! assert!(result.error_rate < 0.5);
//! ```

pub mod data;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod loss;
pub mod optim;
pub mod triplets;

pub use data::{Dataset, LabelMap, PcaModel};
pub use error::{DmlError, Result};
pub use eval::EvalResult;
pub use linalg::{EigenDecomposition, MetricMatrix};
pub use loss::{LossKind, Triplet};
pub use optim::{Algorithm, TrainConfig, TrainReport};
