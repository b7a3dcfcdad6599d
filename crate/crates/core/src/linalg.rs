//! Dense symmetric matrix kernel.
//!
//! The learned metric is a symmetric `d x d` matrix kept inside the domain
//! `{M : M is PSD, ||M||_F <= R}`. Projection onto that set is done in two
//! steps: clamp the negative eigenvalues to zero, then shrink the result
//! radially if its Frobenius norm exceeds `R`.

use serde::{Deserialize, Serialize};

use crate::error::{DmlError, Result};

/// A dense, row-major, square matrix used as a Mahalanobis metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix")]
pub struct MetricMatrix {
    dim: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl TryFrom<RawMatrix> for MetricMatrix {
    type Error = DmlError;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        MetricMatrix::from_row_major(raw.dim, raw.data)
    }
}

impl MetricMatrix {
    pub fn zeros(dim: usize) -> Self {
        MetricMatrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for a in 0..dim {
            m.data[a * dim + a] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (a, &v) in diag.iter().enumerate() {
            m.data[a * diag.len() + a] = v;
        }
        m
    }

    /// Builds a matrix from `dim * dim` row-major entries.
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(DmlError::DimMismatch {
                expected: dim * dim,
                found: data.len(),
            });
        }
        Ok(MetricMatrix { dim, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(DmlError::DimMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(MetricMatrix { dim, data })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.dim + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.dim + col] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_row_major(self) -> Vec<f64> {
        self.data
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|a| self.get(a, a)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &MetricMatrix) {
        debug_assert_eq!(self.dim, other.dim);
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += alpha * y;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for x in &mut self.data {
            *x *= factor;
        }
    }

    pub fn scaled(&self, factor: f64) -> MetricMatrix {
        let mut out = self.clone();
        out.scale(factor);
        out
    }

    /// Replaces the matrix with `(M + M^T) / 2`.
    pub fn symmetrize(&mut self) {
        let d = self.dim;
        for a in 0..d {
            for b in (a + 1)..d {
                let avg = 0.5 * (self.data[a * d + b] + self.data[b * d + a]);
                self.data[a * d + b] = avg;
                self.data[b * d + a] = avg;
            }
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius_norm(self)
    }

    /// Trace inner product `<self, other>`.
    pub fn inner(&self, other: &MetricMatrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(x, y)| x * y).sum()
    }

    /// Quadratic form `v^T M v`.
    #[inline]
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        let d = self.dim;
        let mut total = 0.0;
        for (a, &va) in v.iter().enumerate() {
            let row = &self.data[a * d..(a + 1) * d];
            let mut acc = 0.0;
            for (m, &vb) in row.iter().zip(v) {
                acc += m * vb;
            }
            total += va * acc;
        }
        total
    }

    /// Smallest eigenvalue of the symmetrized matrix.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(sym_eigen(self)?.values[0])
    }
}

/// Eigenvalues in ascending order with matching orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    /// Eigenvectors stored as the columns of a row-major `d x d` matrix.
    pub vectors: MetricMatrix,
}

impl EigenDecomposition {
    pub fn vector(&self, k: usize) -> Vec<f64> {
        let d = self.vectors.dim();
        (0..d).map(|a| self.vectors.get(a, k)).collect()
    }

    /// `V diag(f(lambda)) V^T`, skipping terms where `f` returns zero.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> MetricMatrix {
        let d = self.vectors.dim();
        let weights: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let v = self.vectors.as_slice();
        let mut out = MetricMatrix::zeros(d);
        for a in 0..d {
            for b in a..d {
                let mut acc = 0.0;
                for (k, &w) in weights.iter().enumerate() {
                    if w != 0.0 {
                        acc += w * v[a * d + k] * v[b * d + k];
                    }
                }
                out.data[a * d + b] = acc;
                out.data[b * d + a] = acc;
            }
        }
        out
    }

    pub fn reconstruct(&self) -> MetricMatrix {
        self.reconstruct_with(|l| l)
    }
}

/// Full eigendecomposition of `(M + M^T) / 2`.
///
/// Householder reduction to tridiagonal form followed by the implicit QL
/// algorithm with Wilkinson-style shifts.
pub fn sym_eigen(m: &MetricMatrix) -> Result<EigenDecomposition> {
    if !m.is_finite() {
        return Err(DmlError::NonFiniteInput);
    }
    let n = m.dim();
    let mut v = m.clone();
    v.symmetrize();
    if n == 0 {
        return Ok(EigenDecomposition {
            values: Vec::new(),
            vectors: v,
        });
    }
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(n, v.as_mut_slice(), &mut d, &mut e);
    tridiagonal_ql(n, v.as_mut_slice(), &mut d, &mut e)?;

    // Selection sort keeps the column swaps deterministic and in place.
    let vs = v.as_mut_slice();
    for i in 0..n.saturating_sub(1) {
        let mut k = i;
        let mut p = d[i];
        for (j, &dj) in d.iter().enumerate().skip(i + 1) {
            if dj < p {
                k = j;
                p = dj;
            }
        }
        if k != i {
            d.swap(i, k);
            for row in 0..n {
                vs.swap(row * n + i, row * n + k);
            }
        }
    }
    Ok(EigenDecomposition {
        values: d,
        vectors: v,
    })
}

fn tridiagonalize(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    let at = |r: usize, c: usize| r * n + c;
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
                v[at(j, i)] = 0.0;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[at(j, i)] = f;
                g = e[j] + v[at(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[at(k, j)] * d[k];
                    e[k] += v[at(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[at(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }

    // Accumulate the Householder transformations.
    for i in 0..(n - 1) {
        v[at(n - 1, i)] = v[at(i, i)];
        v[at(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[at(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[at(k, i + 1)] * v[at(k, j)];
                }
                for k in 0..=i {
                    v[at(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[at(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
        v[at(n - 1, j)] = 0.0;
    }
    v[at(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

fn tridiagonal_ql(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let at = |r: usize, c: usize| r * n + c;
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let eps = f64::EPSILON;
    let max_sweeps = 60 * n.max(1);
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut sweeps = 0;
            loop {
                sweeps += 1;
                if sweeps > max_sweeps {
                    return Err(DmlError::NonFiniteInput);
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        let h = v[at(k, i + 1)];
                        v[at(k, i + 1)] = s * v[at(k, i)] + c * h;
                        v[at(k, i)] = c * v[at(k, i)] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Nearest PSD matrix in Frobenius norm: eigenvalues clamped at exactly zero.
pub fn psd_project(m: &MetricMatrix) -> Result<MetricMatrix> {
    let eig = sym_eigen(m)?;
    Ok(eig.reconstruct_with(|l| if l > 0.0 { l } else { 0.0 }))
}

/// Projection onto `{M PSD, ||M||_F <= radius}`.
pub fn domain_project(m: &MetricMatrix, radius: f64) -> Result<MetricMatrix> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(DmlError::InvalidRadius(radius));
    }
    let mut p = psd_project(m)?;
    let shrink = p.frobenius_norm() / radius;
    if shrink > 1.0 {
        for x in p.as_mut_slice() {
            *x /= shrink;
        }
    }
    Ok(p)
}

pub fn frobenius_norm(m: &MetricMatrix) -> f64 {
    m.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Squared Mahalanobis distance `(a - b)^T M (a - b)`.
pub fn mahalanobis_sq(m: &MetricMatrix, a: &[f64], b: &[f64]) -> Result<f64> {
    let d = m.dim();
    for v in [a, b] {
        if v.len() != d {
            return Err(DmlError::DimMismatch {
                expected: d,
                found: v.len(),
            });
        }
    }
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    Ok(m.quad_form(&diff))
}
