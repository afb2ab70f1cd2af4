//! Random projection samplers and the generic random-feature map
//! `z(x) = h(x) / sqrt(m) [f_1(w_1^T x), ..., f_l(w_m^T x)]`.

pub mod hadamard;
mod io;
mod map;
mod sampling;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::KernelId;

pub use io::{read_projection, write_projection};
pub use map::{feature_map, map_rows, map_rows_with, softmax_trig_map, FeatureKind};
pub use sampling::{sample, sample_orf, sample_rff, sample_sorf, truncated_normal, SorfStructure};

pub const DEFAULT_TRUNCATION: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampler {
    /// i.i.d. truncated Gaussian rows.
    Rff,
    /// Blockwise orthogonal rows with chi-distributed norms.
    Orf,
    /// Structured orthogonal rows from Hadamard-Rademacher products.
    Sorf,
}

impl Sampler {
    pub const ALL: [Sampler; 3] = [Sampler::Rff, Sampler::Orf, Sampler::Sorf];

    pub fn name(self) -> &'static str {
        match self {
            Sampler::Rff => "rff",
            Sampler::Orf => "orf",
            Sampler::Sorf => "sorf",
        }
    }
}

impl fmt::Display for Sampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Sampler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rff" | "iid" => Ok(Sampler::Rff),
            "orf" => Ok(Sampler::Orf),
            "sorf" => Ok(Sampler::Sorf),
            _ => Err(Error::unknown("sampler", s)),
        }
    }
}

/// Recipe for a feature map: kernel, sampler, dimensions and seed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMapSpec {
    pub kernel: KernelId,
    pub sampler: Sampler,
    /// Input dimension `d` before any padding.
    pub input_dim: usize,
    /// Number of sampled projection vectors `m`.
    pub features: usize,
    pub seed: u64,
    /// Gaussian draws are truncated at this many standard deviations.
    pub truncation: f64,
}

impl FeatureMapSpec {
    pub fn new(kernel: KernelId, sampler: Sampler, input_dim: usize, features: usize, seed: u64) -> Self {
        FeatureMapSpec { kernel, sampler, input_dim, features, seed, truncation: DEFAULT_TRUNCATION }
    }

    /// `m = d * 2^log2_ratio`.
    pub fn with_log2_ratio(kernel: KernelId, sampler: Sampler, input_dim: usize, log2_ratio: u32, seed: u64) -> Self {
        Self::new(kernel, sampler, input_dim, input_dim << log2_ratio, seed)
    }

    /// `m` chosen so that the output dimension is `d * 2^log2_out_ratio`.
    pub fn with_output_ratio(kernel: KernelId, sampler: Sampler, input_dim: usize, log2_out_ratio: u32, seed: u64) -> Self {
        let out = input_dim << log2_out_ratio;
        Self::new(kernel, sampler, input_dim, (out / kernel.post_functions()).max(1), seed)
    }

    pub fn with_seed(self, seed: u64) -> Self {
        FeatureMapSpec { seed, ..self }
    }

    /// Number of post-processing functions `l`.
    pub fn post_functions(&self) -> usize {
        self.kernel.post_functions()
    }

    /// Output dimension `D = l * m`.
    pub fn output_dim(&self) -> usize {
        self.post_functions() * self.features
    }

    /// Expansion ratio `a = D / (l d)`.
    pub fn expansion_ratio(&self) -> f64 {
        self.output_dim() as f64 / (self.post_functions() * self.input_dim) as f64
    }

    /// Rows of the projection matrix: `d`, or the next power of two for SORF.
    pub fn padded_dim(&self) -> usize {
        match self.sampler {
            Sampler::Sorf => self.input_dim.next_power_of_two(),
            _ => self.input_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.features == 0 {
            return Err(Error::Config("feature map dimensions must be positive".into()));
        }
        if !(self.truncation > 0.0) {
            return Err(Error::Config(format!("truncation {} must be positive", self.truncation)));
        }
        Ok(())
    }
}

/// A sampled projection `Omega` with `padded_dim` rows and `m` columns;
/// column `i` is the projection vector `w_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionMatrix {
    pub omega: DMatrix<f64>,
    pub spec: FeatureMapSpec,
    /// Present for SORF; allows the `O(m log d)` fast evaluation.
    pub sorf: Option<SorfStructure>,
}

impl ProjectionMatrix {
    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn padded_dim(&self) -> usize {
        self.omega.nrows()
    }

    pub fn features(&self) -> usize {
        self.omega.ncols()
    }

    /// Zero-pads `x` to the projection's row count.
    pub fn pad(&self, x: &[f64]) -> Result<Vec<f64>> {
        crate::error::check_dim(self.input_dim(), x.len())?;
        let mut v = x.to_vec();
        v.resize(self.padded_dim(), 0.0);
        Ok(v)
    }

    /// `Omega^T x` in exact arithmetic, using the fast transform for SORF.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        let v = self.pad(x)?;
        Ok(match &self.sorf {
            Some(s) => s.apply(&v, self.features()),
            None => (self.omega.transpose() * nalgebra::DVector::from_vec(v)).data.into(),
        })
    }
}
