//! Ground-truth kernels, Gram matrices, softmax attention and error metrics.
//!
//! Everything here runs in `f64` and serves as the reference the
//! random-feature and analog paths are measured against.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelId {
    /// `exp(-|x-y|^2 / 2)`
    Rbf,
    /// Zeroth-order arc-cosine kernel, `1 - angle(x, y) / pi`.
    ArcCos0,
    /// `exp(x^T y)`
    Softmax,
}

impl KernelId {
    pub const ALL: [KernelId; 3] = [KernelId::Rbf, KernelId::ArcCos0, KernelId::Softmax];

    /// Number of post-processing functions concatenated by the feature map.
    pub fn post_functions(self) -> usize {
        match self {
            KernelId::Rbf | KernelId::Softmax => 2,
            KernelId::ArcCos0 => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelId::Rbf => "rbf",
            KernelId::ArcCos0 => "arccos0",
            KernelId::Softmax => "softmax",
        }
    }
}

impl fmt::Display for KernelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rbf" | "gaussian" => Ok(KernelId::Rbf),
            "arccos0" | "arccos" => Ok(KernelId::ArcCos0),
            "softmax" => Ok(KernelId::Softmax),
            _ => Err(Error::unknown("kernel", s)),
        }
    }
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub(crate) fn sq_norm(x: &[f64]) -> f64 {
    dot(x, x)
}

pub fn kernel_eval(id: KernelId, x: &[f64], y: &[f64]) -> Result<f64> {
    check_dim(x.len(), y.len())?;
    match id {
        KernelId::Rbf => {
            let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
            Ok((-d2 / 2.0).exp())
        }
        KernelId::ArcCos0 => {
            let nx = sq_norm(x).sqrt();
            let ny = sq_norm(y).sqrt();
            if nx == 0.0 || ny == 0.0 {
                return Err(Error::Domain("arc-cosine kernel of a zero vector".into()));
            }
            // angle from the half-chord: exact at 0 and pi, and no acos of a
            // cosine that round-off pushed past 1
            let (mut diff, mut sum) = (0.0, 0.0);
            for (a, b) in x.iter().zip(y) {
                let (u, v) = (a / nx, b / ny);
                diff += (u - v) * (u - v);
                sum += (u + v) * (u + v);
            }
            let theta = 2.0 * diff.sqrt().atan2(sum.sqrt());
            Ok(1.0 - theta / PI)
        }
        KernelId::Softmax => Ok(dot(x, y).exp()),
    }
}

/// Gram matrix `G[i, j] = k(X_i, Y_j)` over the rows of `x` and `y`.
pub fn gram(id: KernelId, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dim(x.ncols(), y.ncols())?;
    let xr = crate::rows(x);
    let yr = crate::rows(y);
    let rows = par::try_map_range(xr.len(), |i| {
        yr.iter()
            .map(|yj| kernel_eval(id, &xr[i], yj))
            .collect::<Result<Vec<f64>>>()
    })?;
    Ok(DMatrix::from_fn(xr.len(), yr.len(), |i, j| rows[i][j]))
}

#[derive(Clone, Debug)]
pub struct GramPair {
    pub exact: DMatrix<f64>,
    pub approx: DMatrix<f64>,
}

impl GramPair {
    pub fn new(exact: DMatrix<f64>, approx: DMatrix<f64>) -> Result<Self> {
        check_dim(exact.nrows(), approx.nrows())?;
        check_dim(exact.ncols(), approx.ncols())?;
        Ok(GramPair { exact, approx })
    }

    pub fn approx_error(&self) -> Result<f64> {
        approx_error(self)
    }
}

/// Relative Frobenius error `|G - G_hat|_F / |G|_F`.
pub fn approx_error(g: &GramPair) -> Result<f64> {
    let denom = g.exact.norm();
    if denom == 0.0 {
        return Err(Error::ZeroGram);
    }
    Ok((&g.exact - &g.approx).norm() / denom)
}

pub fn mse(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    check_dim(a.nrows(), b.nrows())?;
    check_dim(a.ncols(), b.ncols())?;
    if a.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok((a - b).norm_squared() / a.len() as f64)
}

/// Row-wise softmax of `logits`, stabilised by subtracting each row's max.
pub fn softmax_rows(logits: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = logits.clone();
    for mut row in out.row_iter_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.apply(|v| *v = (*v - max).exp());
        let sum = row.sum();
        row.apply(|v| *v /= sum);
    }
    out
}

/// Attention scores `Softmax(Q K^T / sqrt(d_head))`.
pub fn attention_matrix(q: &DMatrix<f64>, k: &DMatrix<f64>, d_head: usize) -> Result<DMatrix<f64>> {
    check_dim(q.ncols(), k.ncols())?;
    check_dim(d_head, q.ncols())?;
    let logits = (q * k.transpose()) / (d_head as f64).sqrt();
    Ok(softmax_rows(&logits))
}

/// `Softmax(Q K^T / sqrt(d_head)) V`.
pub fn attention_exact(
    q: &DMatrix<f64>,
    k: &DMatrix<f64>,
    v: &DMatrix<f64>,
    d_head: usize,
) -> Result<DMatrix<f64>> {
    check_dim(k.nrows(), v.nrows())?;
    Ok(attention_matrix(q, k, d_head)? * v)
}

/// Unnormalised softmax kernel matrix `exp(Q K^T / sqrt(d_head))`.
pub fn softmax_kernel_matrix(
    q: &DMatrix<f64>,
    k: &DMatrix<f64>,
    d_head: usize,
) -> Result<DMatrix<f64>> {
    check_dim(q.ncols(), k.ncols())?;
    check_dim(d_head, q.ncols())?;
    Ok(((q * k.transpose()) / (d_head as f64).sqrt()).map(f64::exp))
}
