//! Random-feature kernel approximation with a simulated analog in-memory
//! crossbar for the projection step.
//!
//! The pipeline is: sample a projection `Omega` ([`features`]), run `x^T
//! Omega` on a [`analog::MvmBackend`] (exact or simulated analog tiles),
//! post-process into features, then use them in a ridge classifier
//! ([`ridge`]) or in linear attention ([`attention`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analog;
pub mod attention;
mod binio;
pub mod cost;
pub mod data;
pub mod error;
pub mod exact;
pub mod experiments;
pub mod features;
pub mod par;
pub mod ridge;
pub mod stats;

use nalgebra::DMatrix;

pub use analog::{build_backend, AnalogTileConfig, BackendKind, ExactBackend, MvmBackend, TiledMatrix};
pub use attention::{favor_attention, relu_attention, AttentionProblem, FavorOutput};
pub use data::Dataset;
pub use error::{Error, Result};
pub use exact::{gram, kernel_eval, KernelId};
pub use features::{feature_map, sample, FeatureMapSpec, ProjectionMatrix, Sampler};
pub use ridge::RidgeModel;

/// Rows of `m` as owned vectors.
pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}
