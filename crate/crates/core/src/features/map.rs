use std::f64::consts::SQRT_2;

use nalgebra::DMatrix;

use super::ProjectionMatrix;
use crate::analog::{noise_rng, MvmBackend, NoiseRng};
use crate::error::{check_dim, Result};
use crate::exact::{sq_norm, KernelId};
use crate::par;

/// Post-processing applied to the projections `w_i^T x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureKind {
    /// The kernel's own post-processing (sin/cos, Heaviside, or positive exp).
    Kernel(KernelId),
    /// Trigonometric estimator of the softmax kernel.
    SoftmaxTrig,
}

impl FeatureKind {
    pub fn post_functions(self) -> usize {
        match self {
            FeatureKind::Kernel(k) => k.post_functions(),
            FeatureKind::SoftmaxTrig => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Kernel(KernelId::Softmax) => "positive",
            FeatureKind::Kernel(k) => k.name(),
            FeatureKind::SoftmaxTrig => "trig",
        }
    }
}

fn heaviside(t: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Applies `h(x) / sqrt(m) [f_1(p), ..., f_l(p)]` to projections `p`.
pub(crate) fn post_process(kind: FeatureKind, x: &[f64], p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let inv_sqrt_m = 1.0 / (m as f64).sqrt();
    let mut out = Vec::with_capacity(kind.post_functions() * m);
    match kind {
        FeatureKind::Kernel(KernelId::Rbf) => {
            out.extend(p.iter().map(|t| t.sin() * inv_sqrt_m));
            out.extend(p.iter().map(|t| t.cos() * inv_sqrt_m));
        }
        FeatureKind::Kernel(KernelId::ArcCos0) => {
            let h = SQRT_2 * inv_sqrt_m;
            out.extend(p.iter().map(|&t| heaviside(t) * h));
        }
        FeatureKind::Kernel(KernelId::Softmax) => {
            // exp(+-p - |x|^2/2) / sqrt(2m), combined in the exponent
            let half = sq_norm(x) / 2.0;
            let scale = inv_sqrt_m / SQRT_2;
            out.extend(p.iter().map(|t| (t - half).exp() * scale));
            out.extend(p.iter().map(|t| (-t - half).exp() * scale));
        }
        FeatureKind::SoftmaxTrig => {
            let h = (sq_norm(x) / 2.0).exp() * inv_sqrt_m;
            out.extend(p.iter().map(|t| t.sin() * h));
            out.extend(p.iter().map(|t| t.cos() * h));
        }
    }
    out
}

fn check_backend(proj: &ProjectionMatrix, backend: &dyn MvmBackend) -> Result<()> {
    check_dim(proj.padded_dim(), backend.input_dim())?;
    check_dim(proj.features(), backend.output_dim())
}

fn map_one(kind: FeatureKind, x: &[f64], proj: &ProjectionMatrix, backend: &dyn MvmBackend, rng: &mut NoiseRng) -> Result<Vec<f64>> {
    check_backend(proj, backend)?;
    let padded = proj.pad(x)?;
    let p = backend.matvec(&padded, rng)?;
    Ok(post_process(kind, x, &p))
}

/// Random-feature map of `x` for the projection's kernel; the linear part
/// `Omega^T x` runs on `backend`.
pub fn feature_map(x: &[f64], proj: &ProjectionMatrix, backend: &dyn MvmBackend, rng: &mut NoiseRng) -> Result<Vec<f64>> {
    map_one(FeatureKind::Kernel(proj.spec.kernel), x, proj, backend, rng)
}

/// Trigonometric softmax features `exp(|x|^2/2)/sqrt(m) [sin(p), cos(p)]`.
/// Unbiased for `exp(x^T y)` but not sign-definite.
pub fn softmax_trig_map(x: &[f64], proj: &ProjectionMatrix, backend: &dyn MvmBackend, rng: &mut NoiseRng) -> Result<Vec<f64>> {
    map_one(FeatureKind::SoftmaxTrig, x, proj, backend, rng)
}

/// Maps every row of `x`. Row `i` draws backend noise from stream `i` of
/// `noise_seed`, so results do not depend on thread count.
pub fn map_rows_with(
    kind: FeatureKind,
    x: &DMatrix<f64>,
    proj: &ProjectionMatrix,
    backend: &dyn MvmBackend,
    noise_seed: u64,
) -> Result<DMatrix<f64>> {
    check_backend(proj, backend)?;
    check_dim(proj.input_dim(), x.ncols())?;
    let rows = crate::rows(x);
    let out_dim = kind.post_functions() * proj.features();
    let mapped = par::try_map_range(rows.len(), |i| {
        let mut rng = noise_rng(noise_seed, i as u64);
        map_one(kind, &rows[i], proj, backend, &mut rng)
    })?;
    Ok(DMatrix::from_fn(rows.len(), out_dim, |i, j| mapped[i][j]))
}

pub fn map_rows(x: &DMatrix<f64>, proj: &ProjectionMatrix, backend: &dyn MvmBackend, noise_seed: u64) -> Result<DMatrix<f64>> {
    map_rows_with(FeatureKind::Kernel(proj.spec.kernel), x, proj, backend, noise_seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analog::ExactBackend;
    use crate::exact::dot;
    use crate::features::{sample, FeatureMapSpec, Sampler};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn proj(kernel: KernelId, sampler: Sampler, d: usize, m: usize, seed: u64) -> ProjectionMatrix {
        sample(FeatureMapSpec::new(kernel, sampler, d, m, seed)).unwrap()
    }

    fn map(x: &[f64], p: &ProjectionMatrix) -> Vec<f64> {
        let b = ExactBackend::for_projection(p);
        feature_map(x, p, &b, &mut noise_rng(0, 0)).unwrap()
    }

    #[test]
    fn rbf_self_product_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for m in [1, 7, 64] {
            let p = proj(KernelId::Rbf, Sampler::Rff, 5, m, m as u64);
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let z = map(&x, &p);
            assert_eq!(z.len(), 2 * m);
            assert!((dot(&z, &z) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn arccos_entries_and_antipodes() {
        let m = 32;
        let p = proj(KernelId::ArcCos0, Sampler::Orf, 4, m, 2);
        let x = [0.3, -1.0, 2.0, 0.5];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let zx = map(&x, &p);
        let zy = map(&neg, &p);
        let level = SQRT_2 / (m as f64).sqrt();
        assert!(zx.iter().all(|&v| v == 0.0 || v == level));
        assert_eq!(dot(&zx, &zy), 0.0);
    }

    #[test]
    fn positive_softmax_features_are_positive() {
        let p = proj(KernelId::Softmax, Sampler::Rff, 3, 20, 4);
        let z = map(&[1.0, -2.0, 0.5], &p);
        assert_eq!(z.len(), 40);
        assert!(z.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn trig_softmax_at_origin_and_sign() {
        let p = proj(KernelId::Softmax, Sampler::Rff, 3, 4, 4);
        let b = ExactBackend::for_projection(&p);
        let z = softmax_trig_map(&[0.0; 3], &p, &b, &mut noise_rng(0, 0)).unwrap();
        assert!((dot(&z, &z) - 1.0).abs() < 1e-15);
        let negative = (0..200u64).any(|s| {
            let p = proj(KernelId::Softmax, Sampler::Rff, 3, 2, s);
            let b = ExactBackend::for_projection(&p);
            let mut r = noise_rng(0, 0);
            let zx = softmax_trig_map(&[1.0, 0.5, -1.0], &p, &b, &mut r).unwrap();
            let zy = softmax_trig_map(&[-1.0, 0.2, 1.5], &p, &b, &mut r).unwrap();
            dot(&zx, &zy) < 0.0
        });
        assert!(negative);
    }

    #[test]
    fn dimension_mismatch() {
        let p = proj(KernelId::Rbf, Sampler::Rff, 3, 4, 0);
        let b = ExactBackend::for_projection(&p);
        assert!(feature_map(&[1.0, 2.0], &p, &b, &mut noise_rng(0, 0)).is_err());
        let other = proj(KernelId::Rbf, Sampler::Rff, 3, 5, 0);
        assert!(feature_map(&[1.0, 2.0, 3.0], &other, &b, &mut noise_rng(0, 0)).is_err());
    }

    #[test]
    fn sorf_rows_padded_at_map_time() {
        let p = proj(KernelId::Rbf, Sampler::Sorf, 3, 8, 1);
        let z = map(&[0.1, 0.2, 0.3], &p);
        assert_eq!(z.len(), 16);
        assert!((dot(&z, &z) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn batch_map_matches_single() {
        let p = proj(KernelId::Softmax, Sampler::Orf, 3, 6, 1);
        let b = ExactBackend::for_projection(&p);
        let x = DMatrix::from_fn(5, 3, |i, j| (i as f64 - j as f64) * 0.3);
        let z = map_rows(&x, &p, &b, 9).unwrap();
        for i in 0..5 {
            let row: Vec<f64> = x.row(i).iter().cloned().collect();
            let single = map(&row, &p);
            for j in 0..12 {
                assert_eq!(z[(i, j)], single[j]);
            }
        }
    }
}
