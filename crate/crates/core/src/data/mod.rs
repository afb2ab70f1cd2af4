//! Dataset loading, standardisation, splitting and synthetic generators.

mod libsvm;
mod manifest;
mod synth;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use libsvm::{parse_csv, parse_libsvm, to_csv, to_libsvm};
pub use manifest::{DatasetEntry, DatasetFormat, Manifest, MANIFEST_ENV};
pub use synth::{bundled_blobs, BLOB_SEED, synth_attention_problem, synthetic_blobs, synthetic_clusters};

/// Std values below this are treated as constant columns.
pub const STD_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    /// `N x d`, one sample per row.
    pub features: DMatrix<f64>,
    /// Contiguous class indices in `0..class_count`.
    pub labels: Vec<usize>,
    pub class_count: usize,
    /// Original label value of each class index, ascending.
    pub label_values: Vec<f64>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        features: DMatrix<f64>,
        labels: Vec<usize>,
        label_values: Vec<f64>,
    ) -> Result<Self> {
        let class_count = label_values.len();
        if features.nrows() == 0 || features.ncols() == 0 {
            return Err(Error::EmptyInput);
        }
        if labels.len() != features.nrows() {
            return Err(Error::DimensionMismatch { expected: features.nrows(), got: labels.len() });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset features"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::Config(format!("label {bad} outside 0..{class_count}")));
        }
        Ok(Dataset { name: name.into(), features, labels, class_count, label_values })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Rows selected by `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let features = self.features.select_rows(idx);
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        Dataset {
            name: self.name.clone(),
            features,
            labels,
            class_count: self.class_count,
            label_values: self.label_values.clone(),
        }
    }

    pub fn with_features(&self, features: DMatrix<f64>) -> Dataset {
        Dataset { features, ..self.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Contiguous halves in file order.
    Fixed,
    /// Seeded 50/50 shuffle.
    RandomHalf,
}

impl std::str::FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(SplitMode::Fixed),
            "random_half" | "random-half" => Ok(SplitMode::RandomHalf),
            _ => Err(Error::unknown("split mode", s)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub mode: SplitMode,
    pub seed: u64,
}

impl SplitSpec {
    pub fn random_half(seed: u64) -> Self {
        SplitSpec { mode: SplitMode::RandomHalf, seed }
    }

    /// Train and test index sets of sizes `ceil(N/2)` and `floor(N/2)`.
    pub fn indices(&self, n: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        if n < 2 {
            return Err(Error::Config(format!("cannot split {n} samples in half")));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        if self.mode == SplitMode::RandomHalf {
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed));
        }
        let test = idx.split_off(n.div_ceil(2));
        Ok((idx, test))
    }
}

pub fn split(dataset: &Dataset, spec: SplitSpec) -> Result<(Dataset, Dataset)> {
    let (train, test) = spec.indices(dataset.len())?;
    Ok((dataset.subset(&train), dataset.subset(&test)))
}

/// Per-column affine normalisation to zero mean and unit variance.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population statistics of `train`; std below [`STD_FLOOR`] becomes 1.
    pub fn fit(train: &DMatrix<f64>) -> Result<Self> {
        if train.nrows() == 0 {
            return Err(Error::EmptyInput);
        }
        let n = train.nrows() as f64;
        let mut mean = Vec::with_capacity(train.ncols());
        let mut std = Vec::with_capacity(train.ncols());
        for col in train.column_iter() {
            let mu = col.sum() / n;
            let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
            let sd = var.sqrt();
            mean.push(mu);
            std.push(if sd < STD_FLOOR { 1.0 } else { sd });
        }
        Ok(Standardizer { mean, std })
    }

    pub fn apply(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        crate::error::check_dim(self.mean.len(), m.ncols())?;
        Ok(DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| (m[(i, j)] - self.mean[j]) / self.std[j]))
    }
}

/// Fits on `train` and transforms both matrices with the train statistics.
pub fn standardize_fit_apply(
    train: &DMatrix<f64>,
    test: &DMatrix<f64>,
) -> Result<(Standardizer, DMatrix<f64>, DMatrix<f64>)> {
    let s = Standardizer::fit(train)?;
    let a = s.apply(train)?;
    let b = s.apply(test)?;
    Ok((s, a, b))
}

/// Standardises a train/test pair of datasets in place of their features.
pub fn standardize_pair(train: &Dataset, test: &Dataset) -> Result<(Dataset, Dataset)> {
    let (_, a, b) = standardize_fit_apply(&train.features, &test.features)?;
    Ok((train.with_features(a), test.with_features(b)))
}
