//! Closed-form one-vs-rest ridge classification on explicit feature maps.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use crate::analog::{build_backend, BackendKind, MvmBackend, NoiseRng};
use crate::binio::{read_f64s, read_header_line, write_f64s};
use crate::data::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::exact::{gram, GramPair};
use crate::features::{feature_map, map_rows, sample, FeatureMapSpec, ProjectionMatrix};
use crate::{par, stats};

pub const DEFAULT_LAMBDA: f64 = 0.5;

/// Approximation error is measured on at most this many test samples.
pub const GRAM_SUBSET: usize = 1000;

#[derive(Clone, Debug, PartialEq)]
pub struct RidgeModel {
    /// `C x D`; a single row for binary tasks.
    pub weights: DMatrix<f64>,
    pub lambda: f64,
    pub class_count: usize,
    pub spec: Option<FeatureMapSpec>,
}

/// `+1` for members of `class`, `-1` otherwise.
fn targets(labels: &[usize], class: usize) -> impl Iterator<Item = f64> + '_ {
    labels.iter().map(move |&l| if l == class { 1.0 } else { -1.0 })
}

/// Solves `(Z^T Z + lambda I) W = Z^T Y` for the `D x C` matrix `W`,
/// through the primal system when `D <= N` and the dual one otherwise.
pub fn solve_ridge(z: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    check_dim(z.nrows(), y.nrows())?;
    let (n, d) = z.shape();
    if d <= n {
        let a = z.tr_mul(z) + DMatrix::identity(d, d) * lambda;
        let chol = a.cholesky().ok_or(Error::NotPositiveDefinite)?;
        Ok(chol.solve(&z.tr_mul(y)))
    } else {
        let a = z * z.transpose() + DMatrix::identity(n, n) * lambda;
        let chol = a.cholesky().ok_or(Error::NotPositiveDefinite)?;
        Ok(z.tr_mul(&chol.solve(y)))
    }
}

impl RidgeModel {
    /// Fits one-vs-rest weights on the rows of `z` (`N x D`).
    pub fn fit(z: &DMatrix<f64>, labels: &[usize], class_count: usize, lambda: f64) -> Result<Self> {
        check_dim(z.nrows(), labels.len())?;
        if z.nrows() == 0 {
            return Err(Error::EmptyInput);
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ridge features"));
        }
        if !(lambda > 0.0) {
            return Err(Error::Config(format!("lambda {lambda} must be positive")));
        }
        let classes: Vec<usize> = if class_count <= 2 { vec![1] } else { (0..class_count).collect() };
        let mut y = DMatrix::zeros(z.nrows(), classes.len());
        for (c, &class) in classes.iter().enumerate() {
            for (i, t) in targets(labels, class).enumerate() {
                y[(i, c)] = t;
            }
        }
        let w = solve_ridge(z, &y, lambda)?;
        Ok(RidgeModel { weights: w.transpose(), lambda, class_count, spec: None })
    }

    pub fn with_spec(self, spec: FeatureMapSpec) -> Self {
        RidgeModel { spec: Some(spec), ..self }
    }

    pub fn output_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn scores(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.output_dim(), z.len())?;
        Ok(self.weights.row_iter().map(|w| w.iter().zip(z).map(|(a, b)| a * b).sum()).collect())
    }

    /// Binary: `sgn(w^T z)` with zero mapped to the positive class (1).
    /// Multi-class: argmax, ties to the lowest class index.
    pub fn predict_features(&self, z: &[f64]) -> Result<usize> {
        let s = self.scores(z)?;
        if self.weights.nrows() == 1 {
            return Ok(if s[0] >= 0.0 { 1 } else { 0 });
        }
        let mut best = 0;
        for (i, &v) in s.iter().enumerate() {
            if v > s[best] {
                best = i;
            }
        }
        Ok(best)
    }

    /// Maps `x` through `backend` and classifies it.
    pub fn predict(&self, x: &[f64], proj: &ProjectionMatrix, backend: &dyn MvmBackend, rng: &mut NoiseRng) -> Result<usize> {
        if let Some(spec) = &self.spec {
            if *spec != proj.spec {
                return Err(Error::SpecMismatch);
            }
        }
        self.predict_features(&feature_map(x, proj, backend, rng)?)
    }

    pub fn accuracy(&self, z: &DMatrix<f64>, labels: &[usize]) -> Result<f64> {
        check_dim(z.nrows(), labels.len())?;
        let rows = crate::rows(z);
        let correct = par::try_map_range(rows.len(), |i| Ok::<_, Error>((self.predict_features(&rows[i])? == labels[i]) as usize))?;
        Ok(correct.iter().sum::<usize>() as f64 / labels.len().max(1) as f64)
    }

    /// Header line `C D lambda`, then the `C x D` weights as little-endian
    /// `f64`, row-major.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {} {}", self.weights.nrows(), self.weights.ncols(), self.lambda)?;
        write_f64s(&mut w, self.weights.transpose().iter().cloned())
    }

    pub fn read<R: BufRead>(mut r: R) -> Result<Self> {
        let header = read_header_line(&mut r)?;
        let f: Vec<&str> = header.split_whitespace().collect();
        if f.len() != 3 {
            return Err(Error::parse(1, format!("expected `C D lambda`, got `{header}`")));
        }
        let bad = |s: &str| Error::parse(1, format!("invalid header field `{s}`"));
        let c: usize = f[0].parse().map_err(|_| bad(f[0]))?;
        let d: usize = f[1].parse().map_err(|_| bad(f[1]))?;
        let lambda: f64 = f[2].parse().map_err(|_| bad(f[2]))?;
        let weights = DMatrix::from_row_slice(c, d, &read_f64s(&mut r, c * d)?);
        let class_count = if c == 1 { 2 } else { c };
        Ok(RidgeModel { weights, lambda, class_count, spec: None })
    }
}

/// Per-seed results of [`evaluate`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RidgeEvaluation {
    pub seeds: Vec<u64>,
    pub exact_accuracy: Vec<f64>,
    pub backend_accuracy: Vec<f64>,
    /// Gram approximation error of the backend features on the test subset.
    pub approx_error: Vec<f64>,
}

impl RidgeEvaluation {
    /// `acc(exact) - acc(backend)` per seed.
    pub fn deltas(&self) -> Vec<f64> {
        self.exact_accuracy.iter().zip(&self.backend_accuracy).map(|(a, b)| a - b).collect()
    }

    pub fn exact_summary(&self) -> (f64, f64) {
        stats::mean_std(&self.exact_accuracy)
    }

    pub fn backend_summary(&self) -> (f64, f64) {
        stats::mean_std(&self.backend_accuracy)
    }
}

/// Fits on exact features of `train` and scores `test` through both the
/// exact map and `backend`, for every seed. Inputs must be standardised.
pub fn evaluate(
    train: &Dataset,
    test: &Dataset,
    spec: FeatureMapSpec,
    backend: &BackendKind,
    seeds: &[u64],
    lambda: f64,
) -> Result<RidgeEvaluation> {
    check_dim(spec.input_dim, train.dim())?;
    check_dim(train.dim(), test.dim())?;
    let subset = test.features.rows(0, test.len().min(GRAM_SUBSET)).into_owned();
    let exact_gram = gram(spec.kernel, &subset, &subset)?;
    let per_seed = par::try_map_slice(seeds, |&seed| -> Result<(f64, f64, f64)> {
        let proj = sample(spec.with_seed(seed))?;
        let exact = build_backend(&proj, &BackendKind::Exact, &train.features)?;
        let z_train = map_rows(&train.features, &proj, exact.as_ref(), seed)?;
        let model = RidgeModel::fit(&z_train, &train.labels, train.class_count, lambda)?.with_spec(proj.spec);
        let exact_acc = model.accuracy(&map_rows(&test.features, &proj, exact.as_ref(), seed)?, &test.labels)?;
        let kind = match backend {
            BackendKind::Analog(cfg) => BackendKind::Analog(cfg.with_seed(cfg.seed ^ seed)),
            BackendKind::Exact => BackendKind::Exact,
        };
        let hw = build_backend(&proj, &kind, &train.features)?;
        let z_test = map_rows(&test.features, &proj, hw.as_ref(), seed.wrapping_add(1))?;
        let hw_acc = model.accuracy(&z_test, &test.labels)?;
        let zs = z_test.rows(0, subset.nrows()).into_owned();
        let err = GramPair::new(exact_gram.clone(), &zs * zs.transpose())?.approx_error()?;
        Ok((exact_acc, hw_acc, err))
    })?;
    Ok(RidgeEvaluation {
        seeds: seeds.to_vec(),
        exact_accuracy: per_seed.iter().map(|r| r.0).collect(),
        backend_accuracy: per_seed.iter().map(|r| r.1).collect(),
        approx_error: per_seed.iter().map(|r| r.2).collect(),
    })
}
