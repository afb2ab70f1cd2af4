//! Linear-complexity attention with random features.
//!
//! Queries and keys are mapped to features `Q'`, `K'` and the output is
//! computed as `D^-1 (Q' (K'^T V))` with `D = diag(Q' (K'^T 1))`, which
//! costs `O(L d D)` instead of `O(L^2 d)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::analog::{build_backend, noise_rng, BackendKind, MvmBackend};
use crate::error::{check_dim, Error, Result};
use crate::exact::{attention_exact, mse, softmax_kernel_matrix, sq_norm, KernelId};
use crate::features::{sample, FeatureMapSpec, ProjectionMatrix, Sampler};
use crate::{par, stats};

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionProblem {
    pub q: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub d_head: usize,
    /// `Softmax(Q K^T / sqrt(d_head)) V`.
    pub exact_output: DMatrix<f64>,
}

impl AttentionProblem {
    pub fn new(q: DMatrix<f64>, k: DMatrix<f64>, v: DMatrix<f64>) -> Result<Self> {
        check_dim(q.ncols(), k.ncols())?;
        check_dim(k.nrows(), v.nrows())?;
        if q.nrows() == 0 || q.ncols() == 0 {
            return Err(Error::EmptyInput);
        }
        let d_head = q.ncols();
        let exact_output = attention_exact(&q, &k, &v, d_head)?;
        Ok(AttentionProblem { q, k, v, d_head, exact_output })
    }

    pub fn len(&self) -> usize {
        self.q.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.q.nrows() == 0
    }

    /// `d_head^{-1/4}`, applied to both queries and keys.
    pub fn input_scale(&self) -> f64 {
        (self.d_head as f64).powf(-0.25)
    }

    /// Scaled queries stacked on scaled keys, for calibrating analog tiles.
    pub fn calibration_rows(&self) -> DMatrix<f64> {
        let s = self.input_scale();
        let (l, d) = self.q.shape();
        let lk = self.k.nrows();
        DMatrix::from_fn(l + lk, d, |i, j| if i < l { self.q[(i, j)] * s } else { self.k[(i - l, j)] * s })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionFeatures {
    /// `exp(+-w^T x)` features; strictly positive.
    Positive,
    /// `sin/cos` features; unbiased but sign-indefinite.
    Trig,
    /// `max(0, w^T x)` with no prefactor.
    Relu,
}

impl AttentionFeatures {
    pub fn name(self) -> &'static str {
        match self {
            AttentionFeatures::Positive => "positive",
            AttentionFeatures::Trig => "trig",
            AttentionFeatures::Relu => "relu",
        }
    }
}

impl fmt::Display for AttentionFeatures {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttentionFeatures {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "positive" | "exp" => Ok(AttentionFeatures::Positive),
            "trig" | "trigonometric" => Ok(AttentionFeatures::Trig),
            "relu" => Ok(AttentionFeatures::Relu),
            _ => Err(Error::unknown("attention features", s)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FavorOutput {
    pub output: DMatrix<f64>,
    /// Query features, each row rescaled by `exp(-q_log_scale[i])`.
    pub q_prime: DMatrix<f64>,
    /// Key features, all rows rescaled by `exp(-k_log_scale)`.
    pub k_prime: DMatrix<f64>,
    pub q_log_scale: Vec<f64>,
    pub k_log_scale: f64,
    /// Diagonal of `D`, in the rescaled units of `q_prime` / `k_prime`.
    pub normalizer: Vec<f64>,
    /// Floating-point operations spent, counted as the computation runs.
    pub flops: u64,
}

impl FavorOutput {
    /// Unnormalised kernel estimate `Q' K'^T` with the stabilisers undone.
    pub fn kernel_estimate(&self, rows: usize) -> DMatrix<f64> {
        let rows = rows.min(self.q_prime.nrows());
        let cols = rows.min(self.k_prime.nrows());
        let q = self.q_prime.rows(0, rows);
        let k = self.k_prime.rows(0, cols);
        let mut g = q * k.transpose();
        for i in 0..rows {
            let s = (self.q_log_scale[i] + self.k_log_scale).exp();
            g.row_mut(i).iter_mut().for_each(|v| *v *= s);
        }
        g
    }
}

/// Projects every row through `backend`; row `i` uses noise stream `stream0 + i`.
fn project_rows(x: &DMatrix<f64>, scale: f64, pad: usize, backend: &dyn MvmBackend, noise_seed: u64, stream0: u64) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let rows = crate::rows(x);
    par::try_map_range(rows.len(), |i| {
        let xs: Vec<f64> = rows[i].iter().map(|v| v * scale).collect();
        let mut padded = xs.clone();
        padded.resize(pad, 0.0);
        let mut rng = noise_rng(noise_seed, stream0 + i as u64);
        Ok((xs, backend.matvec(&padded, &mut rng)?))
    })
}

/// Log-domain feature values (without any row stabiliser) for one input.
fn log_features(kind: AttentionFeatures, x: &[f64], p: &[f64]) -> Vec<(f64, f64)> {
    // each entry is (sign, log|value|)
    let m = p.len() as f64;
    match kind {
        AttentionFeatures::Positive => {
            let base = -sq_norm(x) / 2.0 - (2.0 * m).ln() / 2.0;
            p.iter().map(|t| (1.0, t + base)).chain(p.iter().map(|t| (1.0, -t + base))).collect()
        }
        AttentionFeatures::Trig => {
            let base = sq_norm(x) / 2.0 - m.ln() / 2.0;
            let sc = |v: f64| if v == 0.0 { (0.0, f64::NEG_INFINITY) } else { (v.signum(), v.abs().ln() + base) };
            p.iter().map(|t| sc(t.sin())).chain(p.iter().map(|t| sc(t.cos()))).collect()
        }
        AttentionFeatures::Relu => p.iter().map(|&t| if t > 0.0 { (1.0, t.ln()) } else { (0.0, f64::NEG_INFINITY) }).collect(),
    }
}

fn materialize(logs: &[Vec<(f64, f64)>], shift: &[f64]) -> DMatrix<f64> {
    let cols = logs.first().map_or(0, Vec::len);
    DMatrix::from_fn(logs.len(), cols, |i, j| {
        let (s, l) = logs[i][j];
        if s == 0.0 {
            0.0
        } else {
            s * (l - shift[i]).exp()
        }
    })
}

fn row_max(row: &[(f64, f64)]) -> f64 {
    let m = row.iter().filter(|(s, _)| *s != 0.0).map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if m.is_finite() {
        m
    } else {
        0.0
    }
}

/// Reordered attention `D^-1 (Q' (K'^T V))` on precomputed features.
/// Returns `(output, normalizer, flops)`. `require_positive` rejects
/// non-positive normalisers; otherwise only exact zeros are rejected.
pub fn linear_attention(q_prime: &DMatrix<f64>, k_prime: &DMatrix<f64>, v: &DMatrix<f64>, require_positive: bool) -> Result<(DMatrix<f64>, Vec<f64>, u64)> {
    check_dim(q_prime.ncols(), k_prime.ncols())?;
    check_dim(k_prime.nrows(), v.nrows())?;
    let (l, big_d) = q_prime.shape();
    let (lk, dv) = v.shape();
    let kv = k_prime.tr_mul(v);
    let ksum = k_prime.row_sum().transpose();
    let mut flops = (2 * lk * big_d * dv + lk * big_d) as u64;
    let num = q_prime * &kv;
    let den = q_prime * &ksum;
    flops += (2 * l * big_d * dv + 2 * l * big_d) as u64;
    let mut out = num;
    let mut normalizer = Vec::with_capacity(l);
    for i in 0..l {
        let n = den[i];
        let bad = if require_positive { !(n > 0.0) } else { n == 0.0 || !n.is_finite() };
        if bad || !n.is_finite() {
            return Err(Error::ZeroNormalizer { row: i });
        }
        out.row_mut(i).iter_mut().for_each(|x| *x /= n);
        normalizer.push(n);
    }
    flops += (l * dv) as u64;
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("attention output"));
    }
    Ok((out, normalizer, flops))
}

fn features_attention(p: &AttentionProblem, kind: AttentionFeatures, pad: usize, backend: &dyn MvmBackend, noise_seed: u64) -> Result<FavorOutput> {
    let scale = p.input_scale();
    let l = p.len() as u64;
    let qp = project_rows(&p.q, scale, pad, backend, noise_seed, 0)?;
    let kp = project_rows(&p.k, scale, pad, backend, noise_seed, l)?;
    let m = backend.output_dim();
    let q_logs: Vec<_> = qp.iter().map(|(x, pr)| log_features(kind, x, pr)).collect();
    let k_logs: Vec<_> = kp.iter().map(|(x, pr)| log_features(kind, x, pr)).collect();
    // per-row stabiliser for queries cancels in the normaliser; keys share one
    let q_log_scale: Vec<f64> = q_logs.iter().map(|r| row_max(r)).collect();
    let k_log_scale = k_logs.iter().map(|r| row_max(r)).fold(f64::NEG_INFINITY, f64::max);
    let k_log_scale = if k_log_scale.is_finite() { k_log_scale } else { 0.0 };
    let q_prime = materialize(&q_logs, &q_log_scale);
    let k_prime = materialize(&k_logs, &vec![k_log_scale; k_logs.len()]);
    let (output, normalizer, mut flops) = linear_attention(&q_prime, &k_prime, &p.v, kind != AttentionFeatures::Trig)?;
    // projections plus post-processing of both sides
    let big_d = q_prime.ncols() as u64;
    flops += 2 * (2 * l * p.d_head as u64 * m as u64) + 2 * l * big_d;
    Ok(FavorOutput { output, q_prime, k_prime, q_log_scale, k_log_scale, normalizer, flops })
}

/// Softmax-kernel attention with positive random features. The projection
/// must sample the softmax kernel and `backend` must hold its `Omega`.
pub fn favor_attention(p: &AttentionProblem, proj: &ProjectionMatrix, backend: &dyn MvmBackend, noise_seed: u64) -> Result<FavorOutput> {
    favor_attention_with(p, proj, AttentionFeatures::Positive, backend, noise_seed)
}

/// As [`favor_attention`] with a choice of feature type.
pub fn favor_attention_with(p: &AttentionProblem, proj: &ProjectionMatrix, kind: AttentionFeatures, backend: &dyn MvmBackend, noise_seed: u64) -> Result<FavorOutput> {
    if proj.spec.kernel != KernelId::Softmax {
        return Err(Error::Config(format!("attention needs a softmax projection, got {}", proj.spec.kernel)));
    }
    check_dim(p.d_head, proj.input_dim())?;
    check_dim(proj.padded_dim(), backend.input_dim())?;
    check_dim(proj.features(), backend.output_dim())?;
    features_attention(p, kind, proj.padded_dim(), backend, noise_seed)
}

/// `Q' = ReLU(Q Omega)`, `K' = ReLU(K Omega)` with `Omega` mapping straight
/// to the feature dimension.
pub fn relu_attention(p: &AttentionProblem, omega: &DMatrix<f64>, backend: &dyn MvmBackend, noise_seed: u64) -> Result<FavorOutput> {
    check_dim(p.d_head, omega.nrows())?;
    check_dim(omega.nrows(), backend.input_dim())?;
    check_dim(omega.ncols(), backend.output_dim())?;
    features_attention(p, AttentionFeatures::Relu, omega.nrows(), backend, noise_seed)
}

/// Kernel-matrix metrics use at most this many query and key rows.
pub const KERNEL_METRIC_ROWS: usize = 1024;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttentionExperiment {
    pub len: usize,
    pub d_head: usize,
    pub features: Vec<usize>,
    pub samplers: Vec<Sampler>,
    pub kinds: Vec<AttentionFeatures>,
    pub backends: Vec<BackendKind>,
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorRow {
    pub m: usize,
    pub sampler: Sampler,
    pub features: AttentionFeatures,
    pub backend: &'static str,
    pub metric: &'static str,
    pub values: Vec<f64>,
}

impl ErrorRow {
    pub fn mean(&self) -> f64 {
        stats::mean_std(&self.values).0
    }

    pub fn std(&self) -> f64 {
        stats::mean_std(&self.values).1
    }
}

pub const ERROR_TABLE_HEADER: &str = "m,sampler,features,backend,metric,mean,std,seeds";

pub fn error_table_csv(rows: &[ErrorRow]) -> String {
    let mut out = String::from(ERROR_TABLE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{:e},{:e},{}\n",
            r.m,
            r.sampler,
            r.features,
            r.backend,
            r.metric,
            r.mean(),
            r.std(),
            r.values.len()
        ));
    }
    out
}

/// Derives the projection seed for `(seed, m)` so runs at different `m`
/// draw independent matrices while staying paired across feature types.
fn projection_seed(seed: u64, m: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (m as u64).rotate_left(32)
}

/// One attention run's metrics: kernel-matrix MSE, output MSE and output
/// relative Frobenius error.
pub fn attention_metrics(p: &AttentionProblem, out: &FavorOutput, exact_kernel: &DMatrix<f64>) -> Result<[f64; 3]> {
    let est = out.kernel_estimate(exact_kernel.nrows());
    let kernel_mse = mse(exact_kernel, &est)?;
    let out_mse = mse(&p.exact_output, &out.output)?;
    let rel = (&p.exact_output - &out.output).norm() / p.exact_output.norm();
    Ok([kernel_mse, out_mse, rel])
}

pub const METRICS: [&str; 3] = ["kernel_mse", "attention_mse", "attention_rel_fro"];

impl AttentionExperiment {
    /// Runs every `(m, sampler, features, backend)` cell over all seeds on
    /// synthetic standard-normal problems.
    pub fn run(&self) -> Result<Vec<ErrorRow>> {
        let problems = par::try_map_slice(&self.seeds, |&s| crate::data::synth_attention_problem(self.len, self.d_head, s))?;
        let kernels = par::try_map_range(problems.len(), |i| {
            let p = &problems[i];
            let n = p.len().min(KERNEL_METRIC_ROWS);
            softmax_kernel_matrix(&p.q.rows(0, n).into_owned(), &p.k.rows(0, n).into_owned(), p.d_head)
        })?;
        let mut rows = Vec::new();
        for &m in &self.features {
            for &sampler in &self.samplers {
                for backend in &self.backends {
                    let per_seed = par::try_map_range(self.seeds.len(), |i| -> Result<Vec<[f64; 3]>> {
                        let p = &problems[i];
                        let seed = self.seeds[i];
                        let spec = FeatureMapSpec::new(KernelId::Softmax, sampler, self.d_head, m, projection_seed(seed, m));
                        let proj = sample(spec)?;
                        let kind = match backend {
                            BackendKind::Analog(cfg) => BackendKind::Analog(cfg.with_seed(cfg.seed ^ seed)),
                            BackendKind::Exact => BackendKind::Exact,
                        };
                        let hw = build_backend(&proj, &kind, &p.calibration_rows())?;
                        self.kinds
                            .iter()
                            .map(|&f| {
                                let out = match f {
                                    AttentionFeatures::Relu => relu_attention(p, &proj.omega, hw.as_ref(), seed)?,
                                    _ => favor_attention_with(p, &proj, f, hw.as_ref(), seed)?,
                                };
                                attention_metrics(p, &out, &kernels[i])
                            })
                            .collect()
                    })?;
                    for (fi, &f) in self.kinds.iter().enumerate() {
                        for (mi, metric) in METRICS.iter().enumerate() {
                            if f == AttentionFeatures::Relu && mi == 0 {
                                // relu scores do not estimate the softmax kernel
                                continue;
                            }
                            rows.push(ErrorRow {
                                m,
                                sampler,
                                features: f,
                                backend: backend.name(),
                                metric,
                                values: per_seed.iter().map(|r| r[fi][mi]).collect(),
                            });
                        }
                    }
                }
            }
        }
        Ok(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analog::ExactBackend;
    use crate::data::synth_attention_problem;

    fn quadratic(q: &DMatrix<f64>, k: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
        let mut a = q * k.transpose();
        for mut row in a.row_iter_mut() {
            let s = row.sum();
            row.iter_mut().for_each(|x| *x /= s);
        }
        a * v
    }

    fn softmax_proj(sampler: Sampler, d: usize, m: usize, seed: u64) -> ProjectionMatrix {
        sample(FeatureMapSpec::new(KernelId::Softmax, sampler, d, m, seed)).unwrap()
    }

    #[test]
    fn single_token_returns_v() {
        let p = synth_attention_problem(1, 4, 3).unwrap();
        let proj = softmax_proj(Sampler::Orf, 4, 16, 1);
        let out = favor_attention(&p, &proj, &ExactBackend::for_projection(&proj), 0).unwrap();
        assert!((&out.output - &p.v).amax() <= 1e-12);
    }

    #[test]
    fn reordered_equals_quadratic() {
        let p = synth_attention_problem(32, 8, 5).unwrap();
        let proj = softmax_proj(Sampler::Rff, 8, 64, 2);
        let out = favor_attention(&p, &proj, &ExactBackend::for_projection(&proj), 0).unwrap();
        let brute = quadratic(&out.q_prime, &out.k_prime, &p.v);
        assert!((&out.output - brute).amax() < 1e-8);
        assert!(out.normalizer.iter().all(|&n| n > 0.0));
    }

    #[test]
    fn rejects_non_softmax_projection() {
        let p = synth_attention_problem(4, 4, 0).unwrap();
        let proj = sample(FeatureMapSpec::new(KernelId::Rbf, Sampler::Rff, 4, 8, 0)).unwrap();
        assert!(favor_attention(&p, &proj, &ExactBackend::for_projection(&proj), 0).is_err());
    }

    #[test]
    fn relu_convex_and_reordered() {
        let q = DMatrix::from_fn(6, 3, |i, j| ((i + j) % 4) as f64 * 0.5 + 0.1);
        let k = DMatrix::from_fn(6, 3, |i, j| ((2 * i + j) % 3) as f64 + 0.2);
        let v = DMatrix::from_fn(6, 2, |i, j| (i * 2 + j) as f64);
        let p = AttentionProblem::new(q, k, v.clone()).unwrap();
        let omega = DMatrix::identity(3, 5);
        let out = relu_attention(&p, &omega, &ExactBackend::new(omega.clone()), 0).unwrap();
        for j in 0..2 {
            let (lo, hi) = (v.column(j).min(), v.column(j).max());
            assert!(out.output.column(j).iter().all(|&x| x >= lo - 1e-12 && x <= hi + 1e-12));
        }
        let brute = quadratic(&out.q_prime, &out.k_prime, &p.v);
        assert!((&out.output - brute).amax() < 1e-8);
    }

    #[test]
    fn relu_zero_row_is_error() {
        let mut q = DMatrix::from_element(3, 2, 1.0);
        q.row_mut(1).fill(-1.0);
        let p = AttentionProblem::new(q, DMatrix::from_element(3, 2, 1.0), DMatrix::from_element(3, 1, 1.0)).unwrap();
        let omega = DMatrix::identity(2, 2);
        let r = relu_attention(&p, &omega, &ExactBackend::new(omega.clone()), 0);
        assert!(matches!(r, Err(Error::ZeroNormalizer { row: 1 })));
    }

    #[test]
    fn permutation_equivariant_in_queries() {
        let p = synth_attention_problem(10, 4, 8).unwrap();
        let proj = softmax_proj(Sampler::Orf, 4, 32, 3);
        let b = ExactBackend::for_projection(&proj);
        let out = favor_attention(&p, &proj, &b, 0).unwrap();
        let perm: Vec<usize> = (0..10).rev().collect();
        let pp = AttentionProblem::new(p.q.select_rows(&perm), p.k.clone(), p.v.clone()).unwrap();
        let out2 = favor_attention(&pp, &proj, &b, 0).unwrap();
        assert!((out.output.select_rows(&perm) - out2.output).amax() < 1e-12);
    }

    #[test]
    fn linear_in_values() {
        let p = synth_attention_problem(12, 4, 1).unwrap();
        let v2 = DMatrix::from_fn(12, 4, |i, j| (i as f64 - j as f64) * 0.1);
        let proj = softmax_proj(Sampler::Rff, 4, 16, 4);
        let b = ExactBackend::for_projection(&proj);
        let with = |v: DMatrix<f64>| {
            let pp = AttentionProblem::new(p.q.clone(), p.k.clone(), v).unwrap();
            favor_attention(&pp, &proj, &b, 0).unwrap().output
        };
        let sum = with(&p.v + &v2);
        assert!((sum - with(p.v.clone()) - with(v2)).amax() < 1e-9);
    }

    #[test]
    fn flops_linear_in_length() {
        let proj = softmax_proj(Sampler::Rff, 8, 16, 0);
        let b = ExactBackend::for_projection(&proj);
        let f: Vec<u64> = [64, 128, 256]
            .iter()
            .map(|&l| favor_attention(&synth_attention_problem(l, 8, 0).unwrap(), &proj, &b, 0).unwrap().flops)
            .collect();
        assert_eq!(f[1], 2 * f[0]);
        assert_eq!(f[2], 2 * f[1]);
    }

    #[test]
    fn kernel_estimate_undoes_stabilisers() {
        let p = synth_attention_problem(6, 4, 2).unwrap();
        let proj = softmax_proj(Sampler::Rff, 4, 8, 9);
        let out = favor_attention(&p, &proj, &ExactBackend::for_projection(&proj), 0).unwrap();
        let est = out.kernel_estimate(6);
        let s = p.input_scale();
        let b = ExactBackend::for_projection(&proj);
        let mut rng = noise_rng(0, 0);
        for i in 0..6 {
            for j in 0..6 {
                let q: Vec<f64> = p.q.row(i).iter().map(|v| v * s).collect();
                let k: Vec<f64> = p.k.row(j).iter().map(|v| v * s).collect();
                let zq = crate::features::feature_map(&q, &proj, &b, &mut rng).unwrap();
                let zk = crate::features::feature_map(&k, &proj, &b, &mut rng).unwrap();
                let want = crate::exact::dot(&zq, &zk);
                assert!((est[(i, j)] - want).abs() < 1e-12 * want.abs().max(1.0));
            }
        }
    }
}
