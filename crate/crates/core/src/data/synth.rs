use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{parse_libsvm, Dataset};
use crate::attention::AttentionProblem;
use crate::error::Result;

const BUNDLED_BLOBS: &str = include_str!("../../data/blobs.libsvm");

/// Seed the bundled `data/blobs.libsvm` was generated with.
pub const BLOB_SEED: u64 = 2024;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Two Gaussian blobs centred at `-2` and `+2` on every axis with spread
/// 0.5, noise clipped at three standard deviations so the classes are
/// separated by a hard margin. Labels are `-1` / `+1`, alternating.
pub fn synthetic_blobs(n: usize, d: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let mut features = DMatrix::zeros(n, d);
    for i in 0..n {
        let centre = if labels[i] == 1 { 2.0 } else { -2.0 };
        for j in 0..d {
            let e = normal(&mut rng).clamp(-3.0, 3.0);
            // round to keep the bundled text file exact
            features[(i, j)] = ((centre + 0.5 * e) * 1e6).round() / 1e6;
        }
    }
    Dataset::new("blobs", features, labels, vec![-1.0, 1.0])
}

/// The 200 x 4 blob dataset shipped with the crate.
pub fn bundled_blobs() -> Result<Dataset> {
    parse_libsvm(BUNDLED_BLOBS.as_bytes(), "blobs")
}

/// Low-rank cluster data: eight tight clusters in a 3-d latent space
/// embedded into `d` dimensions through a random linear map plus isotropic
/// noise. Most variance is between clusters, so after standardisation
/// same-cluster pairs keep RBF values well away from zero. Binary labels
/// follow cluster parity.
pub fn synthetic_clusters(n: usize, d: usize, seed: u64) -> Result<Dataset> {
    const LATENT: usize = 3;
    const CLUSTERS: usize = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let embed = DMatrix::from_fn(d, LATENT, |_, _| normal(&mut rng));
    let centres = DMatrix::from_fn(CLUSTERS, LATENT, |_, _| 2.0 * normal(&mut rng));
    let mut features = DMatrix::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = rng.random_range(0..CLUSTERS);
        labels.push(c % 2);
        let z: Vec<f64> = (0..LATENT).map(|k| centres[(c, k)] + 0.35 * normal(&mut rng)).collect();
        for j in 0..d {
            let mut v = 0.1 * normal(&mut rng);
            for (k, zk) in z.iter().enumerate() {
                v += embed[(j, k)] * zk;
            }
            features[(i, j)] = v;
        }
    }
    Dataset::new("clusters", features, labels, vec![0.0, 1.0])
}

/// `Q`, `K`, `V` of shape `len x d_head` with i.i.d. standard normal
/// entries, plus the exact softmax attention output.
pub fn synth_attention_problem(len: usize, d_head: usize, seed: u64) -> Result<AttentionProblem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |rows, cols| DMatrix::from_fn(rows, cols, |_, _| normal(&mut rng));
    let q = draw(len, d_head);
    let k = draw(len, d_head);
    let v = draw(len, d_head);
    AttentionProblem::new(q, k, v)
}
