//! Triplet margins, the smoothed hinge loss and mini-batch gradients.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{DmlError, Result};
use crate::linalg::MetricMatrix;

/// An ordered triple: `i` should be closer to `j` (same class) than to `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

impl Triplet {
    pub fn new(i: usize, j: usize, k: usize) -> Self {
        Triplet { i, j, k }
    }

    fn check(&self, data: &Dataset) -> Result<()> {
        let n = data.len();
        if self.i >= n || self.j >= n || self.k >= n {
            return Err(DmlError::BadTriplet {
                i: self.i,
                j: self.j,
                k: self.k,
                n,
            });
        }
        Ok(())
    }
}

/// Surrogate loss applied to a triplet margin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LossKind {
    /// `(1/L) log(1 + exp(-L (z - 1)))`.
    Smooth { l: f64 },
    /// `max(0, 1 - z)`.
    Hinge,
}

impl LossKind {
    pub fn smooth(l: f64) -> Result<Self> {
        if !(l.is_finite() && l > 0.0) {
            return Err(DmlError::InvalidConfig(format!(
                "smoothness parameter must be positive, got {l}"
            )));
        }
        Ok(LossKind::Smooth { l })
    }

    pub fn value(&self, z: f64) -> f64 {
        loss_value(*self, z)
    }

    pub fn deriv(&self, z: f64) -> f64 {
        loss_deriv(*self, z)
    }
}

/// `log(1 + exp(x))` without overflow.
#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn loss_value(kind: LossKind, z: f64) -> f64 {
    match kind {
        LossKind::Smooth { l } => softplus(-l * (z - 1.0)) / l,
        LossKind::Hinge => (1.0 - z).max(0.0),
    }
}

/// Derivative of the loss in `z`; the hinge uses subgradient 0 at the kink.
pub fn loss_deriv(kind: LossKind, z: f64) -> f64 {
    match kind {
        LossKind::Smooth { l } => {
            // -1 / (1 + exp(u)), u = L (z - 1)
            let u = l * (z - 1.0);
            if u >= 0.0 {
                let e = (-u).exp();
                -e / (1.0 + e)
            } else {
                -1.0 / (1.0 + u.exp())
            }
        }
        LossKind::Hinge => {
            if z < 1.0 {
                -1.0
            } else {
                0.0
            }
        }
    }
}

/// Reusable difference vectors for margin and gradient evaluation.
#[derive(Debug, Clone)]
pub struct Workspace {
    near: Vec<f64>,
    far: Vec<f64>,
}

impl Workspace {
    pub fn new(dim: usize) -> Self {
        Workspace {
            near: vec![0.0; dim],
            far: vec![0.0; dim],
        }
    }

    fn load(&mut self, t: &Triplet, data: &Dataset) {
        let xi = data.row(t.i);
        for ((n, a), b) in self.near.iter_mut().zip(xi).zip(data.row(t.j)) {
            *n = a - b;
        }
        for ((f, a), b) in self.far.iter_mut().zip(xi).zip(data.row(t.k)) {
            *f = a - b;
        }
    }

    fn margin(&self, m: &MetricMatrix) -> f64 {
        m.quad_form(&self.far) - m.quad_form(&self.near)
    }

    /// `grad += coef * ((x_i - x_k)(x_i - x_k)^T - (x_i - x_j)(x_i - x_j)^T)`.
    fn accumulate(&self, grad: &mut MetricMatrix, coef: f64) {
        let d = grad.dim();
        let g = grad.as_mut_slice();
        for a in 0..d {
            let fa = self.far[a];
            let na = self.near[a];
            let row = &mut g[a * d..(a + 1) * d];
            for ((dst, fb), nb) in row.iter_mut().zip(&self.far).zip(&self.near) {
                *dst += coef * (fa * fb - na * nb);
            }
        }
    }
}

fn check_dims(m: &MetricMatrix, data: &Dataset) -> Result<()> {
    if m.dim() != data.dim() {
        return Err(DmlError::DimMismatch {
            expected: data.dim(),
            found: m.dim(),
        });
    }
    Ok(())
}

/// `||x_i - x_k||_M^2 - ||x_i - x_j||_M^2`, i.e. `<M, A_t>` without forming `A_t`.
pub fn triplet_margin(m: &MetricMatrix, t: &Triplet, data: &Dataset) -> Result<f64> {
    t.check(data)?;
    check_dims(m, data)?;
    let mut ws = Workspace::new(data.dim());
    ws.load(t, data);
    Ok(ws.margin(m))
}

/// The matrix `A_t` itself; only needed by tests and diagnostics.
pub fn constraint_matrix(t: &Triplet, data: &Dataset) -> Result<MetricMatrix> {
    t.check(data)?;
    let mut ws = Workspace::new(data.dim());
    ws.load(t, data);
    let mut a = MetricMatrix::zeros(data.dim());
    ws.accumulate(&mut a, 1.0);
    Ok(a)
}

/// Loss, derivative and gradient of one mini-batch at a fixed metric.
#[derive(Debug, Clone)]
pub struct BatchEval {
    /// Per-triplet loss values, in batch order.
    pub losses: Vec<f64>,
    /// Per-triplet loss derivatives `l'(Delta)`, in batch order.
    pub derivs: Vec<f64>,
    /// `(1/b) sum_s l'(Delta_s) A_s`.
    pub gradient: MetricMatrix,
}

impl BatchEval {
    pub fn mean_loss(&self) -> f64 {
        self.losses.iter().sum::<f64>() / self.losses.len() as f64
    }

    pub fn loss_sum(&self) -> f64 {
        self.losses.iter().sum()
    }
}

/// Per-triplet losses and derivatives at `m`, without the gradient.
pub fn batch_margins(
    m: &MetricMatrix,
    batch: &[Triplet],
    data: &Dataset,
    kind: LossKind,
    ws: &mut Workspace,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if batch.is_empty() {
        return Err(DmlError::EmptyBatch);
    }
    check_dims(m, data)?;
    let mut losses = Vec::with_capacity(batch.len());
    let mut derivs = Vec::with_capacity(batch.len());
    for t in batch {
        t.check(data)?;
        ws.load(t, data);
        let z = ws.margin(m);
        losses.push(loss_value(kind, z));
        derivs.push(loss_deriv(kind, z));
    }
    Ok((losses, derivs))
}

/// `(1/b) sum_s derivs[s] A_s`, summed in batch order so the result is
/// bit-reproducible. Triplets must already be validated.
pub fn gradient_from_derivs(batch: &[Triplet], derivs: &[f64], data: &Dataset, ws: &mut Workspace) -> MetricMatrix {
    let inv_b = 1.0 / batch.len() as f64;
    let mut gradient = MetricMatrix::zeros(data.dim());
    for (t, &dz) in batch.iter().zip(derivs) {
        if dz != 0.0 {
            ws.load(t, data);
            ws.accumulate(&mut gradient, dz * inv_b);
        }
    }
    gradient
}

/// Adds `coef * A_t` to `target` in place.
pub fn add_constraint(target: &mut MetricMatrix, coef: f64, t: &Triplet, data: &Dataset, ws: &mut Workspace) {
    ws.load(t, data);
    ws.accumulate(target, coef);
}

/// Losses, derivatives and gradient of one batch.
pub fn evaluate_batch(
    m: &MetricMatrix,
    batch: &[Triplet],
    data: &Dataset,
    kind: LossKind,
    ws: &mut Workspace,
) -> Result<BatchEval> {
    let (losses, derivs) = batch_margins(m, batch, data, kind, ws)?;
    let gradient = gradient_from_derivs(batch, &derivs, data, ws);
    Ok(BatchEval {
        losses,
        derivs,
        gradient,
    })
}

/// Mean loss over the batch.
pub fn minibatch_loss(m: &MetricMatrix, batch: &[Triplet], data: &Dataset, kind: LossKind) -> Result<f64> {
    if batch.is_empty() {
        return Err(DmlError::EmptyBatch);
    }
    check_dims(m, data)?;
    let mut ws = Workspace::new(data.dim());
    let mut total = 0.0;
    for t in batch {
        t.check(data)?;
        ws.load(t, data);
        total += loss_value(kind, ws.margin(m));
    }
    Ok(total / batch.len() as f64)
}

/// Gradient of [`minibatch_loss`] with respect to `M`.
pub fn minibatch_gradient(
    m: &MetricMatrix,
    batch: &[Triplet],
    data: &Dataset,
    kind: LossKind,
) -> Result<MetricMatrix> {
    let mut ws = Workspace::new(data.dim());
    Ok(evaluate_batch(m, batch, data, kind, &mut ws)?.gradient)
}

/// Mean loss of every triplet in `triplets` at `m`: the training objective.
pub fn objective(m: &MetricMatrix, triplets: &[Triplet], data: &Dataset, kind: LossKind) -> Result<f64> {
    if triplets.is_empty() {
        return Ok(0.0);
    }
    minibatch_loss(m, triplets, data, kind)
}
