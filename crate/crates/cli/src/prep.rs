//! Loading, splitting and preprocessing of the train/test pair.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sgdml::data::{self, Standardizer};
use sgdml::triplets::split_train_test;
use sgdml::{Dataset, DmlError};

use crate::Failure;

/// Offset between the training and test seeds of a synthetic recipe.
pub const TEST_SEED_OFFSET: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Recipe {
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    #[serde(default)]
    pub noise_dims: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Recipe {
    /// 3 classes, 20 features of which 10 are noise, 100 points per class.
    pub fn standard(seed: u64) -> Self {
        Recipe {
            classes: 3,
            dim: 20,
            per_class: 100,
            noise_dims: 10,
            seed,
        }
    }

    pub fn generate(&self, seed: u64) -> sgdml::Result<Dataset> {
        data::make_synthetic(self.classes, self.dim, self.per_class, self.noise_dims, seed)
    }
}

#[derive(Debug, Clone)]
pub enum Source {
    Libsvm(PathBuf),
    Synthetic(Recipe),
}

#[derive(Debug, Clone)]
pub enum Holdout {
    File(PathBuf),
    Split { fraction: f64, seed: u64 },
    /// A second draw of the synthetic recipe.
    Fresh,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Preprocess {
    pub standardize: bool,
    pub pca: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataInfo {
    pub source: String,
    pub test: String,
    pub n_train: usize,
    pub n_test: usize,
    pub input_dim: usize,
    pub dim: usize,
    pub classes: usize,
    pub standardize: bool,
    pub pca: Option<usize>,
}

pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
    pub info: DataInfo,
}

/// Resolves the pair, then standardizes and/or projects with statistics
/// fitted on the training side only (standardization first).
pub fn prepare(source: &Source, holdout: &Holdout, pre: Preprocess) -> Result<Prepared, Failure> {
    if matches!((source, holdout), (Source::Libsvm(_), Holdout::Fresh)) {
        return Err(Failure::Usage("a LIBSVM training file needs --test or --split".into()));
    }
    let (full, source_name) = match source {
        Source::Libsvm(path) => (data::read_libsvm(path)?, path.display().to_string()),
        Source::Synthetic(r) => (
            r.generate(r.seed)?,
            format!(
                "synthetic(classes={}, dim={}, per_class={}, noise_dims={}, seed={})",
                r.classes, r.dim, r.per_class, r.noise_dims, r.seed
            ),
        ),
    };
    let (mut train, mut test, test_name) = match holdout {
        Holdout::File(path) => {
            let raw = data::read_libsvm_with_labels(path, full.label_map().clone())?;
            if raw.dim() > full.dim() {
                return Err(DmlError::DimMismatch {
                    expected: full.dim(),
                    found: raw.dim(),
                }
                .into());
            }
            let test = raw.pad_to_dim(full.dim())?;
            (full, test, path.display().to_string())
        }
        Holdout::Split { fraction, seed } => {
            let (tr, te) = split_train_test(&full, *fraction, *seed)?;
            (tr, te, format!("split(fraction={fraction}, seed={seed})"))
        }
        Holdout::Fresh => match source {
            Source::Synthetic(r) => {
                let seed = r.seed + TEST_SEED_OFFSET;
                (full, r.generate(seed)?, format!("synthetic(seed={seed})"))
            }
            Source::Libsvm(_) => unreachable!("rejected above"),
        },
    };
    let classes = train.class_count().max(test.class_count());
    train.widen_classes(classes);
    test.widen_classes(classes);
    let input_dim = train.dim();
    if pre.standardize {
        let s = Standardizer::fit(&train)?;
        train = s.transform(&train)?;
        test = s.transform(&test)?;
    }
    if let Some(rank) = pre.pca {
        let model = data::pca_fit(&train, rank)?;
        train = data::pca_transform(&model, &train)?;
        test = data::pca_transform(&model, &test)?;
    }
    let info = DataInfo {
        source: source_name,
        test: test_name,
        n_train: train.len(),
        n_test: test.len(),
        input_dim,
        dim: train.dim(),
        classes,
        standardize: pre.standardize,
        pca: pre.pca,
    };
    Ok(Prepared { train, test, info })
}
