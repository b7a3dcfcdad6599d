//! Projected stochastic gradient loops over a fixed triplet stream.
//!
//! Five variants share one bookkeeping core:
//!
//! * full SGD: one step and one projection per triplet;
//! * mini-batch SGD: one averaged-gradient step per group of `b` triplets;
//! * adaptive sampling: step on triplet `t` with probability `|l'(Delta_t)|`
//!   using only the sign of the derivative;
//! * hybrids: adaptive sampling at batch granularity, with the sampling
//!   probability `gamma` taken either from one random member's derivative
//!   (`hr`) or from the batch gradient norm relative to a warmup estimate
//!   `W` (`ha`), and the accepted step reweighted by `1/gamma`.
//!
//! Every variant starts at the identity (projected onto the domain), skips
//! the projection entirely when no update is made, and returns the uniform
//! average of its pre-update iterates.

pub mod sampling;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{DmlError, Result};
use crate::linalg::{domain_project, MetricMatrix};
use crate::loss::{
    add_constraint, batch_margins, evaluate_batch, gradient_from_derivs, LossKind, Triplet, Workspace,
};
use sampling::{adaptive_decision, gradient_norm_gamma, hybrid_decision, random_member_gamma};

const TRAIN_STREAM: u64 = 1;
const WARMUP_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "sgd")]
    FullSgd,
    #[serde(rename = "mini")]
    MiniSgd,
    #[serde(rename = "as")]
    AsSgd,
    #[serde(rename = "hr")]
    HrSgd,
    #[serde(rename = "ha")]
    HaSgd,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::FullSgd,
        Algorithm::MiniSgd,
        Algorithm::AsSgd,
        Algorithm::HrSgd,
        Algorithm::HaSgd,
    ];

    /// Short name used on the command line and in reports.
    pub fn key(self) -> &'static str {
        match self {
            Algorithm::FullSgd => "sgd",
            Algorithm::MiniSgd => "mini",
            Algorithm::AsSgd => "as",
            Algorithm::HrSgd => "hr",
            Algorithm::HaSgd => "ha",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Algorithm::FullSgd => "SGD",
            Algorithm::MiniSgd => "Mini-SGD",
            Algorithm::AsSgd => "AS-SGD",
            Algorithm::HrSgd => "HR-SGD",
            Algorithm::HaSgd => "HA-SGD",
        }
    }

    /// Variants that consume one triplet per iteration.
    pub fn is_single_triplet(self) -> bool {
        matches!(self, Algorithm::FullSgd | Algorithm::AsSgd)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

impl FromStr for Algorithm {
    type Err = DmlError;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.key() == s)
            .ok_or_else(|| DmlError::InvalidConfig(format!("unknown algorithm `{s}`")))
    }
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub eta: f64,
    pub batch_size: usize,
    pub radius: f64,
    pub loss: LossKind,
    pub n_constraints: usize,
    pub seed: u64,
    /// Batches sampled to estimate `W` (HA only).
    pub warmup_batches: usize,
    /// Accepted hybrid draws with `gamma` at or below this are discarded.
    pub gamma_floor: f64,
    pub curve_stride: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            algorithm: Algorithm::MiniSgd,
            eta: 1.0,
            batch_size: 10,
            radius: 1000.0,
            loss: LossKind::Smooth { l: 3.0 },
            n_constraints: 100_000,
            seed: 0,
            warmup_batches: 100,
            gamma_floor: 1e-8,
            curve_stride: 1000,
        }
    }
}

impl TrainConfig {
    pub fn for_algorithm(algorithm: Algorithm) -> Self {
        TrainConfig {
            algorithm,
            ..Default::default()
        }
        .normalized()
    }

    /// Forces `batch_size = 1` for the single-triplet variants.
    pub fn normalized(mut self) -> Self {
        if self.algorithm.is_single_triplet() {
            self.batch_size = 1;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(DmlError::InvalidConfig(msg));
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return bad(format!("step size must be positive, got {}", self.eta));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if self.algorithm.is_single_triplet() && self.batch_size != 1 {
            return bad(format!("{} uses batch size 1", self.algorithm));
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(DmlError::InvalidRadius(self.radius));
        }
        if let LossKind::Smooth { l } = self.loss {
            LossKind::smooth(l)?;
        }
        if self.warmup_batches == 0 {
            return bad("warmup batch count must be at least 1".into());
        }
        if !(self.gamma_floor > 0.0 && self.gamma_floor <= 1.0) {
            return bad(format!("gamma floor must lie in (0, 1], got {}", self.gamma_floor));
        }
        if self.curve_stride == 0 {
            return bad("curve stride must be at least 1".into());
        }
        Ok(())
    }

    fn expect(&self, allowed: &[Algorithm]) -> Result<()> {
        if !allowed.contains(&self.algorithm) {
            return Err(DmlError::InvalidConfig(format!(
                "{} cannot be run by this loop",
                self.algorithm
            )));
        }
        self.validate()
    }
}

/// Outcome of one training run.
#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub algorithm: Algorithm,
    pub config: TrainConfig,
    /// Accepted stochastic updates.
    pub updates: usize,
    /// Domain projections performed; equal to `updates`.
    pub projections: usize,
    /// Iterations `T` (batches, or triplets for single-triplet variants).
    pub iterations: usize,
    pub constraints_consumed: usize,
    /// Trailing triplets that did not fill a batch.
    pub dropped_constraints: usize,
    /// Sum of per-triplet losses, each taken at the iterate it was seen with.
    pub loss_sum: f64,
    /// `W` used by HA; absent for other variants.
    pub gradient_scale: Option<f64>,
    pub wall_time_ms: u64,
    /// `(constraints seen, mean loss over the last window)` pairs.
    pub loss_curve: Vec<(usize, f64)>,
    /// Uniform average of the pre-update iterates.
    pub averaged_metric: MetricMatrix,
    #[serde(skip)]
    pub final_metric: MetricMatrix,
}

/// Running state shared by every loop.
struct Tracker {
    current: MetricMatrix,
    sum: MetricMatrix,
    iterations: usize,
    updates: usize,
    projections: usize,
    seen: usize,
    loss_sum: f64,
    window_sum: f64,
    window_count: usize,
    next_record: usize,
    stride: usize,
    radius: f64,
    curve: Vec<(usize, f64)>,
    started: Instant,
}

impl Tracker {
    fn new(dim: usize, cfg: &TrainConfig) -> Result<Self> {
        Ok(Tracker {
            current: domain_project(&MetricMatrix::identity(dim), cfg.radius)?,
            sum: MetricMatrix::zeros(dim),
            iterations: 0,
            updates: 0,
            projections: 0,
            seen: 0,
            loss_sum: 0.0,
            window_sum: 0.0,
            window_count: 0,
            next_record: cfg.curve_stride,
            stride: cfg.curve_stride,
            radius: cfg.radius,
            curve: Vec::new(),
            started: Instant::now(),
        })
    }

    /// Folds the pre-update iterate into the running average.
    fn begin_iteration(&mut self) {
        self.sum.add_scaled(1.0, &self.current);
        self.iterations += 1;
    }

    fn observe(&mut self, losses: &[f64], iteration: usize) -> Result<()> {
        for &l in losses {
            if !l.is_finite() {
                return Err(DmlError::NumericalDivergence { iteration });
            }
            self.loss_sum += l;
            self.window_sum += l;
        }
        self.window_count += losses.len();
        self.seen += losses.len();
        if self.seen >= self.next_record {
            self.record()?;
            while self.next_record <= self.seen {
                self.next_record += self.stride;
            }
        }
        Ok(())
    }

    fn record(&mut self) -> Result<()> {
        if self.window_count == 0 {
            return Ok(());
        }
        self.curve.push((self.seen, self.window_sum / self.window_count as f64));
        self.window_sum = 0.0;
        self.window_count = 0;
        self.check_domain()
    }

    fn check_domain(&self) -> Result<()> {
        let norm = self.current.frobenius_norm();
        let inside = norm <= self.radius * (1.0 + 1e-12)
            && self.current.min_eigenvalue()? >= -1e-9 * norm;
        if inside {
            Ok(())
        } else {
            Err(DmlError::DomainViolation {
                constraints_seen: self.seen,
            })
        }
    }

    fn project_in(&mut self, candidate: MetricMatrix, iteration: usize) -> Result<()> {
        if !candidate.is_finite() {
            return Err(DmlError::NumericalDivergence { iteration });
        }
        self.current = domain_project(&candidate, self.radius)?;
        self.updates += 1;
        self.projections += 1;
        Ok(())
    }

    fn finish(
        mut self,
        cfg: &TrainConfig,
        dropped_constraints: usize,
        gradient_scale: Option<f64>,
    ) -> Result<TrainReport> {
        if self.window_count > 0 {
            self.record()?;
        }
        let averaged_metric = if self.iterations == 0 {
            self.current.clone()
        } else {
            self.sum.scaled(1.0 / self.iterations as f64)
        };
        Ok(TrainReport {
            algorithm: cfg.algorithm,
            config: cfg.clone(),
            updates: self.updates,
            projections: self.projections,
            iterations: self.iterations,
            constraints_consumed: self.seen,
            dropped_constraints,
            loss_sum: self.loss_sum,
            gradient_scale,
            wall_time_ms: self.started.elapsed().as_millis() as u64,
            loss_curve: self.curve,
            averaged_metric,
            final_metric: self.current,
        })
    }
}

fn check_data(triplets: &[Triplet], data: &Dataset) -> Result<()> {
    let n = data.len();
    if let Some(t) = triplets.iter().find(|t| t.i >= n || t.j >= n || t.k >= n) {
        return Err(DmlError::BadTriplet {
            i: t.i,
            j: t.j,
            k: t.k,
            n,
        });
    }
    Ok(())
}

fn train_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(TRAIN_STREAM);
    rng
}

/// Dispatches to the loop matching `cfg.algorithm`.
pub fn train(cfg: &TrainConfig, triplets: &[Triplet], data: &Dataset) -> Result<TrainReport> {
    match cfg.algorithm {
        Algorithm::FullSgd => run_full_sgd(cfg, triplets, data),
        Algorithm::MiniSgd => run_mini_sgd(cfg, triplets, data),
        Algorithm::AsSgd => run_as_sgd(cfg, triplets, data),
        Algorithm::HrSgd | Algorithm::HaSgd => run_hybrid(cfg, triplets, data),
    }
}

/// Draws `cfg.n_constraints` triplets from `data` with `cfg.seed`, then trains.
pub fn fit(cfg: &TrainConfig, data: &Dataset) -> Result<(Vec<Triplet>, TrainReport)> {
    cfg.validate()?;
    let triplets = crate::triplets::generate_triplets(data, cfg.n_constraints, cfg.seed)?;
    let report = train(cfg, &triplets, data)?;
    Ok((triplets, report))
}

/// One projected step per triplet, in order.
pub fn run_full_sgd(cfg: &TrainConfig, triplets: &[Triplet], data: &Dataset) -> Result<TrainReport> {
    cfg.expect(&[Algorithm::FullSgd])?;
    run_batched(cfg, triplets, data)
}

/// One projected averaged-gradient step per consecutive group of `b` triplets.
pub fn run_mini_sgd(cfg: &TrainConfig, triplets: &[Triplet], data: &Dataset) -> Result<TrainReport> {
    cfg.expect(&[Algorithm::MiniSgd])?;
    run_batched(cfg, triplets, data)
}

fn run_batched(cfg: &TrainConfig, triplets: &[Triplet], data: &Dataset) -> Result<TrainReport> {
    check_data(triplets, data)?;
    let b = cfg.batch_size;
    let mut tracker = Tracker::new(data.dim(), cfg)?;
    let mut ws = Workspace::new(data.dim());
    for (t, batch) in triplets.chunks_exact(b).enumerate() {
        tracker.begin_iteration();
        let eval = evaluate_batch(&tracker.current, batch, data, cfg.loss, &mut ws)?;
        tracker.observe(&eval.losses, t)?;
        let mut candidate = tracker.current.clone();
        candidate.add_scaled(-cfg.eta, &eval.gradient);
        tracker.project_in(candidate, t)?;
    }
    tracker.finish(cfg, triplets.len() % b, None)
}

/// Adaptive sampling: update on triplet `t` with probability `|l'(Delta_t)|`.
pub fn run_as_sgd(cfg: &TrainConfig, triplets: &[Triplet], data: &Dataset) -> Result<TrainReport> {
    cfg.expect(&[Algorithm::AsSgd])?;
    check_data(triplets, data)?;
    let mut rng = train_rng(cfg.seed);
    let mut tracker = Tracker::new(data.dim(), cfg)?;
    let mut ws = Workspace::new(data.dim());
    for (t, triplet) in triplets.iter().enumerate() {
        tracker.begin_iteration();
        let one = std::slice::from_ref(triplet);
        let (losses, derivs) = batch_margins(&tracker.current, one, data, cfg.loss, &mut ws)?;
        tracker.observe(&losses, t)?;
        if let Some(tau) = adaptive_decision(derivs[0], &mut rng) {
            let mut candidate = tracker.current.clone();
            add_constraint(&mut candidate, -cfg.eta * tau, triplet, data, &mut ws);
            tracker.project_in(candidate, t)?;
        }
    }
    tracker.finish(cfg, 0, None)
}

/// Batch-level adaptive sampling with `1/gamma` reweighting (HR and HA).
pub fn run_hybrid(cfg: &TrainConfig, triplets: &[Triplet], data: &Dataset) -> Result<TrainReport> {
    cfg.expect(&[Algorithm::HrSgd, Algorithm::HaSgd])?;
    check_data(triplets, data)?;
    let b = cfg.batch_size;
    let scale = if cfg.algorithm == Algorithm::HaSgd && triplets.len() >= b {
        Some(estimate_w(data, triplets, b, cfg.warmup_batches, cfg.loss, cfg.seed)?)
    } else {
        None
    };
    let mut rng = train_rng(cfg.seed);
    let mut tracker = Tracker::new(data.dim(), cfg)?;
    let mut ws = Workspace::new(data.dim());
    for (t, batch) in triplets.chunks_exact(b).enumerate() {
        tracker.begin_iteration();
        let step = match scale {
            None => {
                let (losses, derivs) = batch_margins(&tracker.current, batch, data, cfg.loss, &mut ws)?;
                tracker.observe(&losses, t)?;
                let gamma = random_member_gamma(&derivs, &mut rng);
                hybrid_decision(gamma, cfg.gamma_floor, &mut rng)
                    .map(|tau| (tau, gradient_from_derivs(batch, &derivs, data, &mut ws)))
            }
            Some(w) => {
                let eval = evaluate_batch(&tracker.current, batch, data, cfg.loss, &mut ws)?;
                tracker.observe(&eval.losses, t)?;
                let gamma = gradient_norm_gamma(eval.gradient.frobenius_norm(), w);
                hybrid_decision(gamma, cfg.gamma_floor, &mut rng).map(|tau| (tau, eval.gradient))
            }
        };
        if let Some((tau, gradient)) = step {
            let mut candidate = tracker.current.clone();
            candidate.add_scaled(-cfg.eta * tau, &gradient);
            tracker.project_in(candidate, t)?;
        }
    }
    tracker.finish(cfg, triplets.len() % b, scale)
}

/// Indices of the batches `estimate_w` evaluates: `warmup_batches` draws,
/// uniform with replacement over `0..n_batches`.
pub fn warmup_batch_indices(n_batches: usize, warmup_batches: usize, seed: u64) -> Vec<usize> {
    use rand::Rng;

    if n_batches == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(WARMUP_STREAM);
    (0..warmup_batches).map(|_| rng.random_range(0..n_batches)).collect()
}

/// Largest batch-gradient Frobenius norm at `M = I` over the batches picked
/// by [`warmup_batch_indices`].
pub fn estimate_w(
    data: &Dataset,
    triplets: &[Triplet],
    batch_size: usize,
    warmup_batches: usize,
    loss: LossKind,
    seed: u64,
) -> Result<f64> {
    if warmup_batches == 0 || batch_size == 0 {
        return Err(DmlError::InvalidConfig(
            "warmup needs at least one non-empty batch".into(),
        ));
    }
    let total = triplets.len() / batch_size;
    if total == 0 {
        return Err(DmlError::DegenerateScale);
    }
    let identity = MetricMatrix::identity(data.dim());
    let mut ws = Workspace::new(data.dim());
    let mut w: f64 = 0.0;
    for s in warmup_batch_indices(total, warmup_batches, seed) {
        let batch = &triplets[s * batch_size..(s + 1) * batch_size];
        let eval = evaluate_batch(&identity, batch, data, loss, &mut ws)?;
        w = w.max(eval.gradient.frobenius_norm());
    }
    if w > 0.0 && w.is_finite() {
        Ok(w)
    } else {
        Err(DmlError::DegenerateScale)
    }
}
