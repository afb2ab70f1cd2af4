use nalgebra::DMatrix;

use super::{AnalogTileConfig, MvmBackend, NoiseRng, ProgrammedTile};
use crate::error::{check_dim, Result};

/// A `d x D` matrix spread over a grid of crossbar tiles. Partial sums of
/// tiles sharing output columns are accumulated digitally in `f64`.
#[derive(Clone, Debug)]
pub struct TiledMatrix {
    input_dim: usize,
    output_dim: usize,
    tile_rows: usize,
    tile_cols: usize,
    /// Row-major grid, `grid_rows x grid_cols`.
    tiles: Vec<ProgrammedTile>,
}

impl TiledMatrix {
    pub fn grid_shape(input_dim: usize, output_dim: usize, cfg: &AnalogTileConfig) -> (usize, usize) {
        (input_dim.div_ceil(cfg.rows), output_dim.div_ceil(cfg.cols))
    }

    pub fn program(w: &DMatrix<f64>, cfg: &AnalogTileConfig) -> Result<Self> {
        cfg.validate()?;
        let (d, big_d) = w.shape();
        if d == 0 || big_d == 0 {
            return Err(crate::error::Error::EmptyInput);
        }
        let (gr, gc) = Self::grid_shape(d, big_d, cfg);
        let mut tiles = Vec::with_capacity(gr * gc);
        for r in 0..gr {
            for c in 0..gc {
                let r0 = r * cfg.rows;
                let c0 = c * cfg.cols;
                let block = w.view((r0, c0), (cfg.rows.min(d - r0), cfg.cols.min(big_d - c0))).into_owned();
                tiles.push(ProgrammedTile::program_stream(&block, cfg, (r * gc + c) as u64)?);
            }
        }
        Ok(TiledMatrix { input_dim: d, output_dim: big_d, tile_rows: cfg.rows, tile_cols: cfg.cols, tiles })
    }

    /// Calibrates every tile on its slice of `inputs` (`n x d`).
    pub fn calibrate(self, inputs: &DMatrix<f64>) -> Result<Self> {
        check_dim(self.input_dim, inputs.ncols())?;
        let (_, gc) = self.shape();
        let tile_rows = self.tile_rows;
        let tiles = self
            .tiles
            .into_iter()
            .enumerate()
            .map(|(idx, t)| {
                let r0 = (idx / gc) * tile_rows;
                let rows = t.rows();
                t.calibrate(&inputs.columns(r0, rows).into_owned())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TiledMatrix { tiles, ..self })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.input_dim.div_ceil(self.tile_rows), self.output_dim.div_ceil(self.tile_cols))
    }

    pub fn tiles(&self) -> &[ProgrammedTile] {
        &self.tiles
    }

    pub fn tile(&self, r: usize, c: usize) -> &ProgrammedTile {
        &self.tiles[r * self.shape().1 + c]
    }
}

impl MvmBackend for TiledMatrix {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn matvec(&self, x: &[f64], rng: &mut NoiseRng) -> Result<Vec<f64>> {
        check_dim(self.input_dim, x.len())?;
        let (gr, gc) = self.shape();
        let mut out = vec![0.0; self.output_dim];
        for c in 0..gc {
            let c0 = c * self.tile_cols;
            for r in 0..gr {
                let r0 = r * self.tile_rows;
                let tile = self.tile(r, c);
                let part = tile.matvec(&x[r0..r0 + tile.rows()], rng)?;
                for (o, p) in out[c0..c0 + tile.cols()].iter_mut().zip(part) {
                    *o += p;
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analog::noise_rng;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn grid_shapes() {
        let cfg = AnalogTileConfig::default();
        assert_eq!(TiledMatrix::grid_shape(300, 300, &cfg), (2, 2));
        assert_eq!(TiledMatrix::grid_shape(512, 512, &cfg), (2, 2));
        assert_eq!(TiledMatrix::grid_shape(10, 10, &cfg), (1, 1));
    }

    #[test]
    fn single_padded_tile() {
        let w = random(10, 10, 1);
        let tm = TiledMatrix::program(&w, &AnalogTileConfig::noiseless()).unwrap();
        assert_eq!(tm.tiles().len(), 1);
        assert_eq!(tm.tile(0, 0).rows(), 10);
        let tm = tm.calibrate(&random(20, 10, 2)).unwrap();
        assert_eq!(tm.matvec(&[0.1; 10], &mut noise_rng(0, 0)).unwrap().len(), 10);
    }

    #[test]
    fn large_noiseless_matches_exact_within_quantization() {
        let w = random(512, 512, 3);
        let calib = random(50, 512, 4);
        let tm = TiledMatrix::program(&w, &AnalogTileConfig::noiseless()).unwrap().calibrate(&calib).unwrap();
        assert_eq!(tm.shape(), (2, 2));
        let x: Vec<f64> = calib.row(0).iter().cloned().collect();
        let got = tm.matvec(&x, &mut noise_rng(0, 0)).unwrap();
        let exact = w.tr_mul(&nalgebra::DVector::from_column_slice(&x));
        for j in 0..512 {
            // each row-tile contributes at most scale * |column|_1 / 2
            let bound: f64 = (0..2)
                .map(|r| {
                    let s = tm.tile(r, j / 256).input_scale().unwrap();
                    s * w.view((r * 256, j), (256, 1)).iter().map(|v| v.abs()).sum::<f64>() / 2.0
                })
                .sum();
            assert!((got[j] - exact[j]).abs() <= bound + 1e-9);
        }
    }

    #[test]
    fn deterministic_given_seeds() {
        let w = random(40, 30, 5);
        let cfg = AnalogTileConfig { rows: 16, cols: 16, seed: 3, ..Default::default() };
        let a = TiledMatrix::program(&w, &cfg).unwrap().calibrate(&random(10, 40, 6)).unwrap();
        let b = TiledMatrix::program(&w, &cfg).unwrap().calibrate(&random(10, 40, 6)).unwrap();
        let x = vec![0.3; 40];
        let ya = a.matvec(&x, &mut noise_rng(7, 1)).unwrap();
        let yb = b.matvec(&x, &mut noise_rng(7, 1)).unwrap();
        assert_eq!(ya, yb);
        let yc = a.matvec(&x, &mut noise_rng(7, 2)).unwrap();
        assert_ne!(ya, yc);
    }
}
