//! Binary projection dump: a text header line `d m l kernel sampler seed`
//! followed by `d * m` little-endian `f64` values in row-major order.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use super::{FeatureMapSpec, ProjectionMatrix, DEFAULT_TRUNCATION};
use crate::binio::{read_f64s, read_header_line};
use crate::error::{Error, Result};

pub fn write_projection<W: Write>(proj: &ProjectionMatrix, mut w: W) -> Result<()> {
    let (d, m) = proj.omega.shape();
    let s = &proj.spec;
    writeln!(w, "{d} {m} {} {} {} {}", s.post_functions(), s.kernel, s.sampler, s.seed)?;
    for i in 0..d {
        for j in 0..m {
            w.write_all(&proj.omega[(i, j)].to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads a dump back as a dense projection. The input dimension is taken
/// to be the stored row count.
pub fn read_projection<R: BufRead>(mut r: R) -> Result<ProjectionMatrix> {
    let header = read_header_line(&mut r)?;
    let f: Vec<&str> = header.split_whitespace().collect();
    if f.len() != 6 {
        return Err(Error::parse(1, format!("expected 6 header fields, got {}", f.len())));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| Error::parse(1, format!("invalid number `{s}`")));
    let (d, m, l) = (num(f[0])?, num(f[1])?, num(f[2])?);
    let kernel = f[3].parse()?;
    let sampler = f[4].parse()?;
    let seed = f[5].parse().map_err(|_| Error::parse(1, format!("invalid seed `{}`", f[5])))?;
    let spec = FeatureMapSpec { kernel, sampler, input_dim: d, features: m, seed, truncation: DEFAULT_TRUNCATION };
    if spec.post_functions() != l {
        return Err(Error::parse(1, format!("kernel {kernel} has l = {}, header says {l}", spec.post_functions())));
    }
    let data = read_f64s(&mut r, d * m)?;
    Ok(ProjectionMatrix { omega: DMatrix::from_row_slice(d, m, &data), spec, sorf: None })
}
