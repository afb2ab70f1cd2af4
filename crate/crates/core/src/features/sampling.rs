use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::hadamard::fwht_normalized;
use super::{FeatureMapSpec, ProjectionMatrix, Sampler};
use crate::error::Result;

/// Standard normal draw conditioned on `|v| <= t`, by rejection.
pub fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, t: f64) -> f64 {
    loop {
        let v: f64 = rng.sample(StandardNormal);
        if v.abs() <= t {
            return v;
        }
    }
}

pub fn sample(spec: FeatureMapSpec) -> Result<ProjectionMatrix> {
    match spec.sampler {
        Sampler::Rff => sample_rff(spec),
        Sampler::Orf => sample_orf(spec),
        Sampler::Sorf => sample_sorf(spec),
    }
}

pub fn sample_rff(spec: FeatureMapSpec) -> Result<ProjectionMatrix> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let omega = DMatrix::from_fn(spec.input_dim, spec.features, |_, _| truncated_normal(&mut rng, spec.truncation));
    Ok(ProjectionMatrix { omega, spec: FeatureMapSpec { sampler: Sampler::Rff, ..spec }, sorf: None })
}

/// `ceil(m / d)` independent orthonormal `d x d` blocks (QR of a truncated
/// Gaussian matrix, sign-corrected), each row rescaled by the norm of an
/// independent truncated Gaussian `d`-vector (chi(d) when untruncated); the
/// first `m` rows become the columns of `Omega`.
pub fn sample_orf(spec: FeatureMapSpec) -> Result<ProjectionMatrix> {
    spec.validate()?;
    let d = spec.input_dim;
    let m = spec.features;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut omega = DMatrix::zeros(d, m);
    let mut col = 0;
    while col < m {
        let g = DMatrix::from_fn(d, d, |_, _| truncated_normal(&mut rng, spec.truncation));
        let qr = g.qr();
        let r = qr.r();
        let mut q = qr.q();
        for j in 0..d {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        // columns of q are orthonormal; each becomes one projection vector
        for j in 0..d {
            if col == m {
                break;
            }
            let norm = (0..d).map(|_| truncated_normal(&mut rng, spec.truncation).powi(2)).sum::<f64>().sqrt();
            omega.set_column(col, &(q.column(j) * norm));
            col += 1;
        }
    }
    Ok(ProjectionMatrix { omega, spec: FeatureMapSpec { sampler: Sampler::Orf, ..spec }, sorf: None })
}

/// Rademacher diagonals of the stacked `sqrt(p) H D1 H D2 H D3` blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct SorfStructure {
    /// Padded (power-of-two) dimension `p`.
    pub dim: usize,
    /// Per block, the signs of `D1`, `D2`, `D3` in that order.
    pub signs: Vec<[Vec<f64>; 3]>,
}

impl SorfStructure {
    /// Applies block `b` to a padded vector.
    fn apply_block(&self, b: usize, x: &[f64]) -> Vec<f64> {
        let [d1, d2, d3] = &self.signs[b];
        let mut v: Vec<f64> = x.iter().zip(d3).map(|(a, s)| a * s).collect();
        fwht_normalized(&mut v);
        v.iter_mut().zip(d2).for_each(|(a, s)| *a *= s);
        fwht_normalized(&mut v);
        v.iter_mut().zip(d1).for_each(|(a, s)| *a *= s);
        fwht_normalized(&mut v);
        let scale = (self.dim as f64).sqrt();
        v.iter_mut().for_each(|a| *a *= scale);
        v
    }

    /// First `m` entries of the stacked block outputs for a padded input.
    pub fn apply(&self, x: &[f64], m: usize) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        let mut out = Vec::with_capacity(self.signs.len() * self.dim);
        for b in 0..self.signs.len() {
            out.extend(self.apply_block(b, x));
        }
        out.truncate(m);
        out
    }

    /// Materialised `p x m` matrix with `Omega^T x = apply(x)`.
    pub fn materialize(&self, m: usize) -> DMatrix<f64> {
        let p = self.dim;
        let mut omega = DMatrix::zeros(p, m);
        let mut e = vec![0.0; p];
        for j in 0..p {
            e[j] = 1.0;
            let row = self.apply(&e, m);
            e[j] = 0.0;
            for (i, v) in row.into_iter().enumerate() {
                omega[(j, i)] = v;
            }
        }
        omega
    }
}

pub fn sample_sorf(spec: FeatureMapSpec) -> Result<ProjectionMatrix> {
    spec.validate()?;
    let p = spec.padded_dim();
    let blocks = spec.features.div_ceil(p);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut rademacher = || -> Vec<f64> { (0..p).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect() };
    let signs = (0..blocks).map(|_| [rademacher(), rademacher(), rademacher()]).collect();
    let structure = SorfStructure { dim: p, signs };
    let omega = structure.materialize(spec.features);
    Ok(ProjectionMatrix {
        omega,
        spec: FeatureMapSpec { sampler: Sampler::Sorf, ..spec },
        sorf: Some(structure),
    })
}
