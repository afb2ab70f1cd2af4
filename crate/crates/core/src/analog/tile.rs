use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{noise_rng, NoiseRng};
use crate::error::{check_dim, Error, Result};
use crate::binio::{read_f64s, read_header_line};

/// Crossbar edge length.
pub const TILE_DIM: usize = 256;
/// Largest symmetric INT8 input code.
pub const INT8_MAX: f64 = 127.0;
/// Calibration uses at most this many input rows.
pub const MAX_CALIBRATION_ROWS: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalogTileConfig {
    pub rows: usize,
    pub cols: usize,
    /// Weights are clipped to `clip_alpha` standard deviations; `None`
    /// disables clipping.
    pub clip_alpha: Option<f64>,
    /// Programming noise std relative to `max |W|`.
    pub eta_w: f64,
    /// Output noise std relative to each column's calibrated output range.
    pub eta_out: f64,
    pub input_bits: u8,
    /// ADC range as a multiple of the calibrated column maximum.
    pub adc_headroom: f64,
    /// When false the ADC never saturates.
    pub adc_clamp: bool,
    /// Draw fresh weight noise on every call on top of the frozen realisation.
    pub per_call_weight_noise: bool,
    pub seed: u64,
}

impl Default for AnalogTileConfig {
    fn default() -> Self {
        AnalogTileConfig {
            rows: TILE_DIM,
            cols: TILE_DIM,
            clip_alpha: Some(2.0),
            eta_w: 0.12,
            eta_out: 0.1,
            input_bits: 8,
            adc_headroom: 1.0,
            adc_clamp: true,
            per_call_weight_noise: false,
            seed: 0,
        }
    }
}

impl AnalogTileConfig {
    /// Quantisation is the only error source left.
    pub fn noiseless() -> Self {
        AnalogTileConfig { clip_alpha: None, eta_w: 0.0, eta_out: 0.0, adc_clamp: false, ..Default::default() }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        AnalogTileConfig { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=TILE_DIM).contains(&self.rows) || !(1..=TILE_DIM).contains(&self.cols) {
            return Err(Error::Geometry(format!("tile {}x{} outside 1..={TILE_DIM}", self.rows, self.cols)));
        }
        if !(self.eta_w >= 0.0 && self.eta_out >= 0.0) {
            return Err(Error::Config("noise magnitudes must be non-negative".into()));
        }
        if let Some(a) = self.clip_alpha {
            if !(a > 0.0) {
                return Err(Error::Config(format!("clip_alpha {a} must be positive")));
            }
        }
        if self.input_bits != 8 {
            return Err(Error::Config(format!("only 8-bit inputs are supported, got {}", self.input_bits)));
        }
        if !(self.adc_headroom > 0.0) {
            return Err(Error::Config("adc_headroom must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Calibration {
    input_scale: f64,
    /// Per-column `(scale, offset)` applied after the ADC.
    affine: Vec<(f64, f64)>,
    adc_clip: Vec<f64>,
    /// Per-column reference for the output-noise magnitude.
    out_ref: Vec<f64>,
}

/// One programmed crossbar. Only the occupied `rows x cols` region is
/// stored; unused devices hold zero conductance and contribute nothing.
#[derive(Clone, Debug, PartialEq)]
pub struct ProgrammedTile {
    cfg: AnalogTileConfig,
    target: DMatrix<f64>,
    effective: DMatrix<f64>,
    weight_noise_std: f64,
    calibration: Option<Calibration>,
}

fn population_std(w: &DMatrix<f64>) -> f64 {
    let n = w.len() as f64;
    let mean = w.sum() / n;
    (w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Symmetric INT8 code, rounding half away from zero.
pub(crate) fn quantize(x: f64, scale: f64) -> f64 {
    (x / scale).round().clamp(-INT8_MAX, INT8_MAX)
}

impl ProgrammedTile {
    pub fn program(w: &DMatrix<f64>, cfg: &AnalogTileConfig) -> Result<Self> {
        Self::program_stream(w, cfg, 0)
    }

    /// Clips `w` to `clip_alpha` standard deviations and freezes one
    /// programming-noise realisation drawn from stream `stream` of `cfg.seed`.
    pub(crate) fn program_stream(w: &DMatrix<f64>, cfg: &AnalogTileConfig, stream: u64) -> Result<Self> {
        cfg.validate()?;
        let (r, c) = w.shape();
        if r == 0 || c == 0 || r > cfg.rows || c > cfg.cols {
            return Err(Error::Geometry(format!("{r}x{c} matrix does not fit a {}x{} tile", cfg.rows, cfg.cols)));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tile weights"));
        }
        let sd = population_std(w);
        let target = match cfg.clip_alpha {
            Some(alpha) if sd > 0.0 => {
                let bound = alpha * sd;
                w.map(|v| v.clamp(-bound, bound))
            }
            _ => w.clone(),
        };
        let weight_noise_std = cfg.eta_w * target.amax();
        let mut rng = noise_rng(cfg.seed, stream);
        let effective = if weight_noise_std > 0.0 {
            target.map(|v| v + weight_noise_std * rng.sample::<f64, _>(StandardNormal))
        } else {
            target.clone()
        };
        Ok(ProgrammedTile { cfg: *cfg, target, effective, weight_noise_std, calibration: None })
    }

    pub fn rows(&self) -> usize {
        self.target.nrows()
    }

    pub fn cols(&self) -> usize {
        self.target.ncols()
    }

    pub fn config(&self) -> &AnalogTileConfig {
        &self.cfg
    }

    pub fn target_weights(&self) -> &DMatrix<f64> {
        &self.target
    }

    pub fn effective_weights(&self) -> &DMatrix<f64> {
        &self.effective
    }

    pub fn is_calibrated(&self) -> bool {
        self.calibration.is_some()
    }

    pub fn input_scale(&self) -> Option<f64> {
        self.calibration.as_ref().map(|c| c.input_scale)
    }

    pub fn adc_clip(&self) -> Option<&[f64]> {
        self.calibration.as_ref().map(|c| c.adc_clip.as_slice())
    }

    pub fn column_affine(&self) -> Option<&[(f64, f64)]> {
        self.calibration.as_ref().map(|c| c.affine.as_slice())
    }

    /// INT8 codes for `x` under the calibrated input scale.
    pub fn quantize_input(&self, x: &[f64]) -> Result<Vec<i8>> {
        let cal = self.calibration.as_ref().ok_or(Error::Uncalibrated)?;
        check_dim(self.rows(), x.len())?;
        Ok(x.iter().map(|&v| quantize(v, cal.input_scale) as i8).collect())
    }

    fn dequantized(&self, x: &[f64], scale: f64) -> DVector<f64> {
        DVector::from_iterator(x.len(), x.iter().map(|&v| quantize(v, scale) * scale))
    }

    /// Sets the input scale from the calibration inputs' max-abs and the
    /// per-column ADC range from the largest noiseless output they produce.
    pub fn calibrate(mut self, inputs: &DMatrix<f64>) -> Result<Self> {
        check_dim(self.rows(), inputs.ncols())?;
        let n = inputs.nrows().min(MAX_CALIBRATION_ROWS);
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let inputs = inputs.rows(0, n);
        let max_abs = inputs.amax();
        if !(max_abs > 0.0) || !max_abs.is_finite() {
            return Err(Error::DegenerateCalibration(format!("calibration inputs max-abs is {max_abs}")));
        }
        let input_scale = max_abs / INT8_MAX;
        let outputs: Vec<DVector<f64>> = inputs
            .row_iter()
            .map(|row| {
                let x: Vec<f64> = row.iter().cloned().collect();
                self.effective.tr_mul(&self.dequantized(&x, input_scale))
            })
            .collect();
        let cols = self.cols();
        let mut out_ref = vec![0.0f64; cols];
        for y in &outputs {
            for (r, v) in out_ref.iter_mut().zip(y.iter()) {
                *r = r.max(v.abs());
            }
        }
        let adc_clip: Vec<f64> = if self.cfg.adc_clamp {
            out_ref.iter().map(|r| r * self.cfg.adc_headroom).collect()
        } else {
            vec![f64::INFINITY; cols]
        };
        let affine = (0..cols)
            .map(|c| {
                let pairs: Vec<(f64, f64)> = outputs
                    .iter()
                    .map(|y| (y[c].clamp(-adc_clip[c], adc_clip[c]), y[c]))
                    .collect();
                fit_affine(&pairs)
            })
            .collect();
        self.calibration = Some(Calibration { input_scale, affine, adc_clip, out_ref });
        Ok(self)
    }

    /// Noisy analog product for one input vector.
    pub fn matvec(&self, x: &[f64], rng: &mut NoiseRng) -> Result<Vec<f64>> {
        let cal = self.calibration.as_ref().ok_or(Error::Uncalibrated)?;
        check_dim(self.rows(), x.len())?;
        let xq = self.dequantized(x, cal.input_scale);
        let mut y = if self.cfg.per_call_weight_noise && self.weight_noise_std > 0.0 {
            let s = self.weight_noise_std;
            let w = self.effective.map(|v| v + s * rng.sample::<f64, _>(StandardNormal));
            w.tr_mul(&xq)
        } else {
            self.effective.tr_mul(&xq)
        };
        for (c, v) in y.iter_mut().enumerate() {
            let sd = self.cfg.eta_out * cal.out_ref[c];
            if sd > 0.0 {
                *v += sd * rng.sample::<f64, _>(StandardNormal);
            }
            let clip = cal.adc_clip[c];
            let (a, b) = cal.affine[c];
            *v = a * v.clamp(-clip, clip) + b;
        }
        Ok(y.data.into())
    }

    /// Debug dump: header `rows cols clip_alpha eta_w eta_out seed`, then
    /// little-endian `f64` arrays: target and effective weights (row-major),
    /// per-column affine `(scale, offset)` pairs, per-column ADC clips.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        let cal = self.calibration.as_ref().ok_or(Error::Uncalibrated)?;
        let alpha = self.cfg.clip_alpha.unwrap_or(f64::INFINITY);
        writeln!(w, "{} {} {} {} {} {}", self.rows(), self.cols(), alpha, self.cfg.eta_w, self.cfg.eta_out, self.cfg.seed)?;
        for m in [&self.target, &self.effective] {
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    w.write_all(&m[(i, j)].to_le_bytes())?;
                }
            }
        }
        for &(a, b) in &cal.affine {
            w.write_all(&a.to_le_bytes())?;
            w.write_all(&b.to_le_bytes())?;
        }
        for c in &cal.adc_clip {
            w.write_all(&c.to_le_bytes())?;
        }
        Ok(())
    }
}

/// Parsed tile dump.
#[derive(Clone, Debug, PartialEq)]
pub struct TileDump {
    pub clip_alpha: f64,
    pub eta_w: f64,
    pub eta_out: f64,
    pub seed: u64,
    pub target: DMatrix<f64>,
    pub effective: DMatrix<f64>,
    pub affine: Vec<(f64, f64)>,
    pub adc_clip: Vec<f64>,
}

pub fn read_tile_dump<R: BufRead>(mut r: R) -> Result<TileDump> {
    let header = read_header_line(&mut r)?;
    let f: Vec<&str> = header.split_whitespace().collect();
    if f.len() != 6 {
        return Err(Error::parse(1, format!("expected 6 header fields, got {}", f.len())));
    }
    let bad = |s: &str| Error::parse(1, format!("invalid header field `{s}`"));
    let rows: usize = f[0].parse().map_err(|_| bad(f[0]))?;
    let cols: usize = f[1].parse().map_err(|_| bad(f[1]))?;
    let clip_alpha: f64 = f[2].parse().map_err(|_| bad(f[2]))?;
    let eta_w: f64 = f[3].parse().map_err(|_| bad(f[3]))?;
    let eta_out: f64 = f[4].parse().map_err(|_| bad(f[4]))?;
    let seed: u64 = f[5].parse().map_err(|_| bad(f[5]))?;
    let target = DMatrix::from_row_slice(rows, cols, &read_f64s(&mut r, rows * cols)?);
    let effective = DMatrix::from_row_slice(rows, cols, &read_f64s(&mut r, rows * cols)?);
    let affine = read_f64s(&mut r, 2 * cols)?.chunks_exact(2).map(|p| (p[0], p[1])).collect();
    let adc_clip = read_f64s(&mut r, cols)?;
    Ok(TileDump { clip_alpha, eta_w, eta_out, seed, target, effective, affine, adc_clip })
}

/// Least-squares `(a, b)` minimising `sum (a * clamped + b - true)^2`.
/// Identity when nothing was clamped or the clamped values are constant.
fn fit_affine(pairs: &[(f64, f64)]) -> (f64, f64) {
    if pairs.iter().all(|(c, t)| c == t) {
        return (1.0, 0.0);
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return (1.0, 0.0);
    }
    let a = sxy / sxx;
    (a, my - a * mx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    fn rng() -> NoiseRng {
        noise_rng(42, 0)
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let cfg = AnalogTileConfig::default();
        let t = ProgrammedTile::program(&DMatrix::zeros(8, 4), &cfg).unwrap();
        assert!(t.effective_weights().iter().all(|&v| v == 0.0));
        let t = t.calibrate(&random(10, 8, 1)).unwrap();
        let y = t.matvec(&[0.7; 8], &mut rng()).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn outlier_is_clipped_to_alpha_std() {
        let mut w = DMatrix::from_fn(16, 16, |i, j| if (i + j) % 2 == 0 { 1.0 } else { -1.0 });
        w[(3, 3)] = 0.0;
        let sd0 = population_std(&w);
        w[(3, 3)] = 10.0 * sd0;
        let sd = population_std(&w);
        let cfg = AnalogTileConfig { eta_w: 0.0, ..Default::default() };
        let t = ProgrammedTile::program(&w, &cfg).unwrap();
        assert!((t.target_weights()[(3, 3)] - 2.0 * sd).abs() < 1e-12);
        assert!(t.target_weights().iter().all(|v| v.abs() <= 2.0 * sd + 1e-15));
    }

    #[test]
    fn noiseless_equals_clipped_times_quantized() {
        let w = random(12, 5, 3);
        let cfg = AnalogTileConfig { eta_w: 0.0, eta_out: 0.0, adc_clamp: false, ..Default::default() };
        let t = ProgrammedTile::program(&w, &cfg).unwrap().calibrate(&random(30, 12, 4)).unwrap();
        let x: Vec<f64> = random(1, 12, 5).iter().cloned().collect();
        let s = t.input_scale().unwrap();
        let xq = DVector::from_iterator(12, x.iter().map(|&v| quantize(v, s) * s));
        let want = t.target_weights().tr_mul(&xq);
        let got = t.matvec(&x, &mut rng()).unwrap();
        for (a, b) in got.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_inputs_match_exact() {
        let w = random(6, 3, 7);
        let calib = DMatrix::from_fn(4, 6, |i, j| ((i * 6 + j) % 255) as f64 * 0.01 - 1.27);
        let t = ProgrammedTile::program(&w, &AnalogTileConfig::noiseless()).unwrap().calibrate(&calib).unwrap();
        assert!((t.input_scale().unwrap() - 0.01).abs() < 1e-15);
        let x = [0.05, -0.13, 1.27, 0.0, -0.9, 0.33];
        assert_eq!(t.quantize_input(&x).unwrap(), vec![5, -13, 127, 0, -90, 33]);
        let exact = w.tr_mul(&DVector::from_column_slice(&x));
        let got = t.matvec(&x, &mut rng()).unwrap();
        for (a, b) in got.iter().zip(exact.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn calibration_errors() {
        let t = ProgrammedTile::program(&random(4, 4, 0), &AnalogTileConfig::default()).unwrap();
        assert!(matches!(t.matvec(&[0.0; 4], &mut rng()), Err(Error::Uncalibrated)));
        assert!(matches!(t.clone().calibrate(&DMatrix::zeros(3, 4)), Err(Error::DegenerateCalibration(_))));
        assert!(matches!(t.calibrate(&DMatrix::zeros(0, 4)), Err(Error::EmptyInput)));
    }

    #[test]
    fn geometry_violation() {
        let cfg = AnalogTileConfig { rows: 4, cols: 4, ..Default::default() };
        assert!(matches!(ProgrammedTile::program(&random(5, 4, 0), &cfg), Err(Error::Geometry(_))));
        let bad = AnalogTileConfig { rows: 300, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_input_gives_affine_offset() {
        let cfg = AnalogTileConfig { eta_out: 0.0, ..Default::default() };
        let t = ProgrammedTile::program(&random(8, 8, 1), &cfg).unwrap().calibrate(&random(20, 8, 2)).unwrap();
        let y = t.matvec(&[0.0; 8], &mut rng()).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn headroom_below_one_engages_affine_fit() {
        let cfg = AnalogTileConfig { eta_w: 0.0, eta_out: 0.0, adc_headroom: 0.8, ..Default::default() };
        let t = ProgrammedTile::program(&random(8, 4, 1), &cfg).unwrap().calibrate(&random(200, 8, 2)).unwrap();
        let affine = t.column_affine().unwrap();
        assert!(affine.iter().all(|&(a, _)| a > 1.0));
    }

    #[test]
    fn calibration_replay_rarely_saturates() {
        let t = ProgrammedTile::program(&random(32, 16, 1), &AnalogTileConfig::default()).unwrap();
        let calib = random(500, 32, 2);
        let t = t.calibrate(&calib).unwrap();
        let clips = t.adc_clip().unwrap().to_vec();
        let s = t.input_scale().unwrap();
        let mut exceed = 0;
        for row in calib.row_iter() {
            let x: Vec<f64> = row.iter().cloned().collect();
            let y = t.effective_weights().tr_mul(&t.dequantized(&x, s));
            exceed += y.iter().zip(&clips).filter(|(v, c)| v.abs() > **c).count();
        }
        assert!(exceed as f64 <= 0.001 * (500 * 16) as f64);
    }

    #[test]
    fn dump_round_trip() {
        let t = ProgrammedTile::program(&random(3, 2, 1), &AnalogTileConfig::default().with_seed(9))
            .unwrap()
            .calibrate(&random(5, 3, 2))
            .unwrap();
        let mut buf = Vec::new();
        t.write_dump(&mut buf).unwrap();
        assert!(buf.starts_with(b"3 2 2 0.12 0.1 9\n"));
        let d = read_tile_dump(&buf[..]).unwrap();
        assert_eq!(&d.target, t.target_weights());
        assert_eq!(&d.effective, t.effective_weights());
        assert_eq!(d.adc_clip.as_slice(), t.adc_clip().unwrap());
        assert_eq!(d.affine.as_slice(), t.column_affine().unwrap());
    }
}
