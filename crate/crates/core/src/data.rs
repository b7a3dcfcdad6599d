//! Labeled datasets: LIBSVM text ingestion, PCA, standardization and
//! synthetic generators.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{DmlError, Result};
use crate::linalg::{sym_eigen, MetricMatrix};

/// Maps raw label strings to contiguous class ids in order of first appearance.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelMap {
    names: Vec<String>,
}

impl LabelMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names(names: Vec<String>) -> Self {
        LabelMap { names }
    }

    /// Id for `name`, registering it if unseen.
    pub fn intern(&mut self, name: &str) -> usize {
        match self.names.iter().position(|n| n == name) {
            Some(id) => id,
            None => {
                self.names.push(name.to_string());
                self.names.len() - 1
            }
        }
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Dense labeled feature vectors, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
    class_count: usize,
    label_map: LabelMap,
}

impl Dataset {
    /// Builds a dataset whose class names are the decimal class ids.
    pub fn new(features: Vec<f64>, dim: usize, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        let names = (0..class_count).map(|c| c.to_string()).collect();
        Self::with_label_map(features, dim, labels, LabelMap::from_names(names))
    }

    pub fn with_label_map(
        features: Vec<f64>,
        dim: usize,
        labels: Vec<usize>,
        label_map: LabelMap,
    ) -> Result<Self> {
        if features.len() != labels.len() * dim {
            return Err(DmlError::DimMismatch {
                expected: labels.len() * dim,
                found: features.len(),
            });
        }
        let class_count = label_map.len();
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(DmlError::InvalidConfig(format!(
                "label {bad} outside [0, {class_count})"
            )));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(DmlError::NonFiniteInput);
        }
        Ok(Dataset {
            features,
            dim,
            labels,
            class_count,
            label_map,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<usize>, class_count: usize) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut features = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(DmlError::DimMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            features.extend_from_slice(row);
        }
        Self::new(features, dim, labels, class_count)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn label_map(&self) -> &LabelMap {
        &self.label_map
    }

    /// Number of distinct labels actually present.
    pub fn distinct_classes(&self) -> usize {
        let mut seen = vec![false; self.class_count];
        for &l in &self.labels {
            seen[l] = true;
        }
        seen.into_iter().filter(|&s| s).count()
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.class_count];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Largest Euclidean row norm, the `r` in `||x|| <= r`.
    pub fn max_norm(&self) -> f64 {
        (0..self.len())
            .map(|i| self.row(i).iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Rows at `indices`, keeping the label map.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            features,
            dim: self.dim,
            labels,
            class_count: self.class_count,
            label_map: self.label_map.clone(),
        }
    }

    /// Same rows with new feature vectors (used by transforms).
    fn with_features(&self, features: Vec<f64>, dim: usize) -> Dataset {
        Dataset {
            features,
            dim,
            labels: self.labels.clone(),
            class_count: self.class_count,
            label_map: self.label_map.clone(),
        }
    }

    /// Appends zero columns up to `dim`. A LIBSVM file whose trailing
    /// columns are all zero parses narrower than its training partner.
    pub fn pad_to_dim(&self, dim: usize) -> Result<Dataset> {
        if dim < self.dim {
            return Err(DmlError::DimMismatch {
                expected: dim,
                found: self.dim,
            });
        }
        if dim == self.dim {
            return Ok(self.clone());
        }
        let mut features = Vec::with_capacity(self.len() * dim);
        for i in 0..self.len() {
            features.extend_from_slice(self.row(i));
            features.resize(features.len() + dim - self.dim, 0.0);
        }
        Ok(self.with_features(features, dim))
    }

    /// Extends the label universe so both datasets agree on class ids.
    pub fn widen_classes(&mut self, class_count: usize) {
        while self.label_map.len() < class_count {
            let next = self.label_map.len().to_string();
            self.label_map.intern(&next);
        }
        self.class_count = self.class_count.max(class_count);
    }
}

/// Parses LIBSVM text (`<label> <index>:<value> ...`, 1-based strictly
/// increasing indices) into a dense dataset.
pub fn read_libsvm(path: impl AsRef<Path>) -> Result<Dataset> {
    read_libsvm_with_labels(path, LabelMap::new())
}

/// Like [`read_libsvm`] but seeds the label mapping, so a test file maps
/// its labels onto the ids used by the matching training file.
pub fn read_libsvm_with_labels(path: impl AsRef<Path>, labels: LabelMap) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DmlError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_libsvm(&text, labels)
}

pub fn parse_libsvm(text: &str, mut label_map: LabelMap) -> Result<Dataset> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut dim = 0;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| DmlError::Parse {
            line: lineno + 1,
            message,
        };
        let mut tokens = line.split_whitespace();
        let label = tokens.next().ok_or_else(|| err("missing label".into()))?;
        if label.contains(':') {
            return Err(err(format!("expected a label, found `{label}`")));
        }
        let mut entries = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| err(format!("expected index:value, found `{tok}`")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| err(format!("bad feature index `{idx}`")))?;
            if idx == 0 {
                return Err(err("feature indices are 1-based".into()));
            }
            if idx <= last {
                return Err(err(format!("index {idx} does not increase past {last}")));
            }
            let val: f64 = val
                .parse()
                .map_err(|_| err(format!("bad feature value `{val}`")))?;
            if !val.is_finite() {
                return Err(err(format!("non-finite value `{val}`")));
            }
            last = idx;
            entries.push((idx - 1, val));
        }
        dim = dim.max(last);
        labels.push(label_map.intern(label));
        rows.push(entries);
    }
    if rows.is_empty() {
        return Err(DmlError::EmptyDataset);
    }
    let mut features = vec![0.0; rows.len() * dim];
    for (r, entries) in rows.iter().enumerate() {
        for &(c, v) in entries {
            features[r * dim + c] = v;
        }
    }
    Dataset::with_label_map(features, dim, labels, label_map)
}

/// Renders a dataset as LIBSVM text. Zero entries are omitted except the
/// last column, which is always written so the dimension survives a re-read.
pub fn format_libsvm(data: &Dataset) -> String {
    let mut out = String::new();
    for i in 0..data.len() {
        let name = data
            .label_map()
            .name(data.label(i))
            .map(str::to_string)
            .unwrap_or_else(|| data.label(i).to_string());
        out.push_str(&name);
        let row = data.row(i);
        for (c, &v) in row.iter().enumerate() {
            if v != 0.0 || c + 1 == row.len() {
                // `{}` on f64 prints the shortest string that round-trips.
                let _ = write!(out, " {}:{}", c + 1, v);
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_libsvm(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_libsvm(data)).map_err(|source| DmlError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Principal axes of the sample covariance.
#[derive(Debug, Clone)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `d x p` row-major, one component per column.
    pub components: Vec<f64>,
    pub rank: usize,
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn component(&self, j: usize) -> Vec<f64> {
        let d = self.input_dim();
        (0..d).map(|a| self.components[a * self.rank + j]).collect()
    }
}

/// Covariance PCA (`1/(n-1)` normalization) keeping the top `rank` axes.
pub fn pca_fit(data: &Dataset, rank: usize) -> Result<PcaModel> {
    let n = data.len();
    let d = data.dim();
    let max = d.min(n.saturating_sub(1));
    if rank == 0 || rank > max {
        return Err(DmlError::BadRank { rank, max });
    }
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, x) in mean.iter_mut().zip(data.row(i)) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = MetricMatrix::zeros(d);
    let mut centered = vec![0.0; d];
    for i in 0..n {
        for ((c, x), m) in centered.iter_mut().zip(data.row(i)).zip(&mean) {
            *c = x - m;
        }
        let cs = cov.as_mut_slice();
        for a in 0..d {
            let ca = centered[a];
            for b in a..d {
                cs[a * d + b] += ca * centered[b];
            }
        }
    }
    let denom = (n - 1) as f64;
    for a in 0..d {
        for b in a..d {
            let v = cov.get(a, b) / denom;
            cov.set(a, b, v);
            cov.set(b, a, v);
        }
    }
    let eig = sym_eigen(&cov)?;
    let mut components = vec![0.0; d * rank];
    let mut explained_variance = Vec::with_capacity(rank);
    for j in 0..rank {
        let k = d - 1 - j;
        let mut v = eig.vector(k);
        let pivot = v
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (i, &x)| if x.abs() > best.1.abs() { (i, x) } else { best })
            .0;
        if v[pivot] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        for a in 0..d {
            components[a * rank + j] = v[a];
        }
        explained_variance.push(eig.values[k].max(0.0));
    }
    Ok(PcaModel {
        mean,
        components,
        rank,
        explained_variance,
    })
}

/// Maps every row to `components^T (x - mean)`.
pub fn pca_transform(model: &PcaModel, data: &Dataset) -> Result<Dataset> {
    let d = model.input_dim();
    if data.dim() != d {
        return Err(DmlError::DimMismatch {
            expected: d,
            found: data.dim(),
        });
    }
    let p = model.rank;
    let mut out = vec![0.0; data.len() * p];
    let mut centered = vec![0.0; d];
    for i in 0..data.len() {
        for ((c, x), m) in centered.iter_mut().zip(data.row(i)).zip(&model.mean) {
            *c = x - m;
        }
        let dst = &mut out[i * p..(i + 1) * p];
        for (a, &ca) in centered.iter().enumerate() {
            let comp_row = &model.components[a * p..(a + 1) * p];
            for (o, w) in dst.iter_mut().zip(comp_row) {
                *o += ca * w;
            }
        }
    }
    Ok(data.with_features(out, p))
}

/// Per-feature standardization fitted on one dataset and applied to others.
#[derive(Debug, Clone)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Zero-variance columns keep a unit scale.
    pub fn fit(data: &Dataset) -> Result<Self> {
        let n = data.len();
        if n == 0 {
            return Err(DmlError::EmptyDataset);
        }
        let d = data.dim();
        let mut mean = vec![0.0; d];
        for i in 0..n {
            for (m, x) in mean.iter_mut().zip(data.row(i)) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for i in 0..n {
            for ((v, x), m) in var.iter_mut().zip(data.row(i)).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let sd = (v / (n.max(2) - 1) as f64).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Standardizer { mean, scale })
    }

    pub fn transform(&self, data: &Dataset) -> Result<Dataset> {
        if data.dim() != self.mean.len() {
            return Err(DmlError::DimMismatch {
                expected: self.mean.len(),
                found: data.dim(),
            });
        }
        let d = data.dim();
        let mut out = data.features().to_vec();
        for row in out.chunks_mut(d.max(1)) {
            for ((x, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *x = (*x - m) / s;
            }
        }
        Ok(data.with_features(out, d))
    }
}

/// Distance between class means along each signal axis.
pub const SYNTHETIC_SEPARATION: f64 = 4.0;
/// Standard deviation of the label-independent nuisance coordinates.
pub const SYNTHETIC_NOISE_SD: f64 = 5.0;

/// Gaussian classes centered on scaled simplex vertices.
///
/// Class `c` is centered at `SYNTHETIC_SEPARATION * e_c` inside the first
/// `dim - noise_dims` coordinates, and every coordinate gets unit Gaussian
/// noise. The trailing `noise_dims` coordinates instead carry Gaussian noise
/// with standard deviation [`SYNTHETIC_NOISE_SD`] and no class signal.
/// Rows are grouped by class.
pub fn make_synthetic(
    classes: usize,
    dim: usize,
    per_class: usize,
    noise_dims: usize,
    seed: u64,
) -> Result<Dataset> {
    if classes < 2 {
        return Err(DmlError::DegenerateLabels);
    }
    if per_class < 2 {
        return Err(DmlError::InvalidConfig(format!(
            "per_class must be at least 2, got {per_class}"
        )));
    }
    if dim < 2 || noise_dims >= dim {
        return Err(DmlError::InvalidConfig(format!(
            "need dim >= 2 and noise_dims < dim (dim={dim}, noise_dims={noise_dims})"
        )));
    }
    let signal = dim - noise_dims;
    if classes > signal {
        return Err(DmlError::InvalidConfig(format!(
            "{classes} classes need at least {classes} signal dimensions, have {signal}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = classes * per_class;
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for c in 0..classes {
        for _ in 0..per_class {
            for a in 0..dim {
                let z: f64 = StandardNormal.sample(&mut rng);
                let x = if a < signal {
                    let center = if a == c { SYNTHETIC_SEPARATION } else { 0.0 };
                    center + z
                } else {
                    SYNTHETIC_NOISE_SD * z
                };
                features.push(x);
            }
            labels.push(c);
        }
    }
    Dataset::new(features, dim, labels, classes)
}
