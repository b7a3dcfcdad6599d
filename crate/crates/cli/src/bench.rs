//! Multi-algorithm sweeps over one shared triplet stream.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sgdml::eval::classification_error;
use sgdml::optim::train;
use sgdml::triplets::generate_triplets;
use sgdml::{Algorithm, DmlError, LossKind, MetricMatrix, TrainConfig};

use crate::prep::{prepare, DataInfo, Holdout, Preprocess, Recipe, Source};
use crate::{ErrorInfo, Failure};

/// Flat JSON description of a sweep.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSpec {
    /// LIBSVM training file; mutually exclusive with `synthetic`.
    #[serde(default)]
    pub libsvm: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<Recipe>,
    #[serde(default)]
    pub test: Option<PathBuf>,
    #[serde(default)]
    pub split: Option<f64>,
    #[serde(default)]
    pub split_seed: Option<u64>,
    #[serde(default)]
    pub standardize: bool,
    #[serde(default)]
    pub pca: Option<usize>,
    #[serde(default = "default_constraints")]
    pub n_constraints: usize,
    /// Seeds the triplet stream and every run.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_k")]
    pub k: usize,
    pub configs: Vec<RowConfig>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_constraints() -> usize {
    TrainConfig::default().n_constraints
}

fn default_k() -> usize {
    3
}

/// One sweep entry. The stream parameters (`n_constraints`, `seed`) are
/// spec-wide so every row sees the same triplets.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowConfig {
    pub algorithm: Algorithm,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub loss: Option<LossKind>,
    #[serde(default)]
    pub warmup_batches: Option<usize>,
    #[serde(default)]
    pub gamma_floor: Option<f64>,
    #[serde(default)]
    pub curve_stride: Option<usize>,
}

impl RowConfig {
    fn resolve(&self, n_constraints: usize, seed: u64) -> TrainConfig {
        let mut cfg = TrainConfig::for_algorithm(self.algorithm);
        cfg.n_constraints = n_constraints;
        cfg.seed = seed;
        if let Some(v) = self.eta {
            cfg.eta = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.radius {
            cfg.radius = v;
        }
        if let Some(v) = self.loss {
            cfg.loss = v;
        }
        if let Some(v) = self.warmup_batches {
            cfg.warmup_batches = v;
        }
        if let Some(v) = self.gamma_floor {
            cfg.gamma_floor = v;
        }
        if let Some(v) = self.curve_stride {
            cfg.curve_stride = v;
        }
        cfg
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub method: String,
    pub algorithm: Option<Algorithm>,
    pub error_percent: Option<f64>,
    pub updates: Option<usize>,
    pub projections: Option<usize>,
    pub wall_time_ms: Option<u64>,
    pub config: Option<TrainConfig>,
    pub error: Option<ErrorInfo>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchTable {
    pub dataset: DataInfo,
    pub k: usize,
    pub n_constraints: usize,
    pub seed: u64,
    pub rows: Vec<BenchRow>,
}

impl BenchSpec {
    pub fn parse(text: &str) -> Result<BenchSpec, DmlError> {
        serde_json::from_str(text).map_err(|e| DmlError::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    }

    fn source(&self) -> Result<Source, Failure> {
        match (&self.libsvm, &self.synthetic) {
            (Some(p), None) => Ok(Source::Libsvm(p.clone())),
            (None, Some(r)) => Ok(Source::Synthetic(r.clone())),
            (None, None) => Ok(Source::Synthetic(Recipe::standard(self.seed))),
            (Some(_), Some(_)) => Err(Failure::Usage(
                "bench spec names both a libsvm file and a synthetic recipe".into(),
            )),
        }
    }

    fn holdout(&self) -> Result<Holdout, Failure> {
        match (&self.test, self.split) {
            (Some(p), None) => Ok(Holdout::File(p.clone())),
            (None, Some(fraction)) => Ok(Holdout::Split {
                fraction,
                seed: self.split_seed.unwrap_or(self.seed),
            }),
            (None, None) => Ok(Holdout::Fresh),
            (Some(_), Some(_)) => Err(Failure::Usage(
                "bench spec gives both a test file and a split fraction".into(),
            )),
        }
    }
}

/// Runs every row (in parallel) and returns them in spec order, preceded
/// by the Euclidean baseline.
pub fn run(spec: &BenchSpec) -> Result<BenchTable, Failure> {
    if spec.configs.is_empty() {
        return Err(Failure::Usage("bench spec lists no configs".into()));
    }
    let configs: Vec<TrainConfig> = spec
        .configs
        .iter()
        .map(|c| c.resolve(spec.n_constraints, spec.seed))
        .collect();
    let pre = Preprocess {
        standardize: spec.standardize,
        pca: spec.pca,
    };
    let data = prepare(&spec.source()?, &spec.holdout()?, pre)?;
    let triplets = generate_triplets(&data.train, spec.n_constraints, spec.seed)?;

    let baseline = classification_error(&MetricMatrix::identity(data.train.dim()), &data.train, &data.test, spec.k)?;
    let mut rows = vec![BenchRow {
        method: "Euclidean".into(),
        algorithm: None,
        error_percent: Some(baseline.error_percent()),
        updates: None,
        projections: None,
        wall_time_ms: None,
        config: None,
        error: None,
    }];
    let trained: Vec<BenchRow> = configs
        .par_iter()
        .map(|cfg| {
            let outcome = train(cfg, &triplets, &data.train).and_then(|report| {
                let eval = classification_error(&report.averaged_metric, &data.train, &data.test, spec.k)?;
                Ok((report, eval))
            });
            let mut row = BenchRow {
                method: cfg.algorithm.display_name().into(),
                algorithm: Some(cfg.algorithm),
                error_percent: None,
                updates: None,
                projections: None,
                wall_time_ms: None,
                config: Some(cfg.clone()),
                error: None,
            };
            match outcome {
                Ok((report, eval)) => {
                    row.error_percent = Some(eval.error_percent());
                    row.updates = Some(report.updates);
                    row.projections = Some(report.projections);
                    row.wall_time_ms = Some(report.wall_time_ms);
                }
                Err(e) => row.error = Some(ErrorInfo::from(&e)),
            }
            row
        })
        .collect();
    rows.extend(trained);
    Ok(BenchTable {
        dataset: data.info,
        k: spec.k,
        n_constraints: spec.n_constraints,
        seed: spec.seed,
        rows,
    })
}

/// Aligned plain-text rendering. Numbers use the same shortest round-trip
/// form as the JSON output.
pub fn render_text(table: &BenchTable) -> String {
    let header = ["method", "error_%", "updates", "projections", "time_ms", "status"];
    let dash = || "-".to_string();
    let mut lines: Vec<[String; 6]> = vec![header.map(String::from)];
    for r in &table.rows {
        lines.push([
            r.method.clone(),
            r.error_percent.map_or_else(dash, |v| format!("{v:.2}")),
            r.updates.map_or_else(dash, |v| v.to_string()),
            r.projections.map_or_else(dash, |v| v.to_string()),
            r.wall_time_ms.map_or_else(dash, |v| v.to_string()),
            r.error.as_ref().map_or_else(|| "ok".into(), |e| e.kind.clone()),
        ]);
    }
    let mut widths = [0usize; 6];
    for line in &lines {
        for (w, cell) in widths.iter_mut().zip(line) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    for line in &lines {
        let cells: Vec<String> = line
            .iter()
            .zip(widths)
            .enumerate()
            .map(|(c, (cell, w))| {
                if c == 0 || c == 5 {
                    format!("{cell:<w$}")
                } else {
                    format!("{cell:>w$}")
                }
            })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}
