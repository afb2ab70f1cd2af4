//! Matrix-vector backends: exact `f64` arithmetic, and a simulated analog
//! crossbar with weight clipping, programming noise, INT8 inputs, output
//! noise, ADC saturation and per-column affine correction.

mod tile;
mod tiled;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::features::{ProjectionMatrix, SorfStructure};

pub use tile::{read_tile_dump, TileDump, AnalogTileConfig, ProgrammedTile, INT8_MAX, MAX_CALIBRATION_ROWS, TILE_DIM};
pub use tiled::TiledMatrix;

/// Per-call noise source handed to [`MvmBackend::matvec`].
pub type NoiseRng = ChaCha8Rng;

/// Independent, reproducible noise stream `stream` of `seed`.
pub fn noise_rng(seed: u64, stream: u64) -> NoiseRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A fixed linear map `x -> W^T x` with `W` of shape `input_dim x output_dim`.
pub trait MvmBackend: Send + Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn matvec(&self, x: &[f64], rng: &mut NoiseRng) -> Result<Vec<f64>>;
}

/// Exact `f64` matrix-vector product.
#[derive(Clone, Debug)]
pub struct ExactBackend {
    w: DMatrix<f64>,
    sorf: Option<SorfStructure>,
}

impl ExactBackend {
    pub fn new(w: DMatrix<f64>) -> Self {
        ExactBackend { w, sorf: None }
    }

    /// Uses the fast Hadamard evaluation when the projection is SORF.
    pub fn for_projection(proj: &ProjectionMatrix) -> Self {
        ExactBackend { w: proj.omega.clone(), sorf: proj.sorf.clone() }
    }
}

impl MvmBackend for ExactBackend {
    fn input_dim(&self) -> usize {
        self.w.nrows()
    }

    fn output_dim(&self) -> usize {
        self.w.ncols()
    }

    fn matvec(&self, x: &[f64], _rng: &mut NoiseRng) -> Result<Vec<f64>> {
        check_dim(self.w.nrows(), x.len())?;
        if let Some(s) = &self.sorf {
            return Ok(s.apply(x, self.w.ncols()));
        }
        Ok(self.w.tr_mul(&DVector::from_column_slice(x)).data.into())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "lowercase")]
pub enum BackendKind {
    Exact,
    Analog(AnalogTileConfig),
}

impl BackendKind {
    pub fn name(&self) -> &'static str {
        match self {
            BackendKind::Exact => "exact",
            BackendKind::Analog(_) => "analog",
        }
    }
}

/// Builds the backend for `proj`. Analog backends are programmed with
/// `Omega` and calibrated on the (unpadded) rows of `calibration`.
pub fn build_backend(proj: &ProjectionMatrix, kind: &BackendKind, calibration: &DMatrix<f64>) -> Result<Box<dyn MvmBackend>> {
    match kind {
        BackendKind::Exact => Ok(Box::new(ExactBackend::for_projection(proj))),
        BackendKind::Analog(cfg) => {
            check_dim(proj.input_dim(), calibration.ncols())?;
            let mut padded = DMatrix::zeros(calibration.nrows(), proj.padded_dim());
            padded.columns_mut(0, calibration.ncols()).copy_from(calibration);
            let tm = TiledMatrix::program(&proj.omega, cfg)?.calibrate(&padded)?;
            Ok(Box::new(tm))
        }
    }
}
