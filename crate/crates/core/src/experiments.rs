//! Experiment drivers and CSV output shared by the CLI and the tests.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::analog::{build_backend, BackendKind};
use crate::data::{split, standardize_pair, synthetic_clusters, bundled_blobs, Dataset, DatasetFormat, Manifest, SplitSpec, MANIFEST_ENV};
use crate::error::{check_dim, Error, Result};
use crate::exact::{gram, GramPair, KernelId};
use crate::features::{map_rows, sample, FeatureMapSpec, Sampler};
use crate::ridge::{evaluate, RidgeEvaluation};
use crate::{par, stats};

/// Sample count of the built-in `clusters` dataset.
pub const CLUSTERS_N: usize = 1000;
pub const CLUSTERS_D: usize = 16;

/// Resolves a dataset argument to a standardised `(train, test)` pair.
///
/// `blobs` and `clusters` are built in; anything else is looked up in the
/// manifest named by `KAIMC_MANIFEST`, then treated as a file path.
pub fn load_dataset(arg: &str, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, test) = match arg {
        "blobs" => split(&bundled_blobs()?, SplitSpec::random_half(seed))?,
        "clusters" => split(&synthetic_clusters(CLUSTERS_N, CLUSTERS_D, seed)?, SplitSpec::random_half(seed))?,
        _ => {
            let entry = match std::env::var_os(MANIFEST_ENV) {
                Some(path) => Manifest::load(Path::new(&path))?.get(arg).cloned(),
                None => None,
            };
            match entry {
                Some(e) => e.load(seed)?,
                None => {
                    let path = Path::new(arg);
                    if !path.is_file() {
                        return Err(Error::Config(format!("dataset `{arg}` is not built in, not in the manifest and not a file")));
                    }
                    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or(arg);
                    let ds = DatasetFormat::from_path(path).load(path, name)?;
                    split(&ds, SplitSpec::random_half(seed))?
                }
            }
        }
    };
    standardize_pair(&train, &test)
}

/// Test inputs used for Gram-matrix error, capped at `limit` rows.
pub fn test_subset(test: &Dataset, limit: usize) -> nalgebra::DMatrix<f64> {
    test.features.rows(0, test.len().min(limit)).into_owned()
}

/// Analog backends get their noise seed mixed with the run seed so that
/// each seed sees a fresh programming-noise realisation.
pub fn seeded_backend(kind: &BackendKind, seed: u64) -> BackendKind {
    match kind {
        BackendKind::Analog(cfg) => BackendKind::Analog(cfg.with_seed(cfg.seed ^ seed)),
        BackendKind::Exact => BackendKind::Exact,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ApproxErrorConfig {
    pub dataset: String,
    pub kernels: Vec<KernelId>,
    pub samplers: Vec<Sampler>,
    /// `log2(m / d)` values.
    pub ratios: Vec<u32>,
    pub backends: Vec<BackendKind>,
    pub seeds: Vec<u64>,
    /// Compare the exact Gram matrix with itself; every error is zero.
    pub self_check: bool,
    pub subset: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ApproxRow {
    pub dataset: String,
    pub kernel: KernelId,
    pub sampler: Sampler,
    pub log2_ratio: u32,
    pub backend: &'static str,
    pub errors: Vec<f64>,
}

impl ApproxRow {
    pub fn mean(&self) -> f64 {
        stats::mean_std(&self.errors).0
    }

    pub fn std(&self) -> f64 {
        stats::mean_std(&self.errors).1
    }

    pub fn median(&self) -> f64 {
        stats::median(&self.errors)
    }
}

pub fn validate_ratios(ratios: &[u32]) -> Result<()> {
    if ratios.is_empty() {
        return Err(Error::Config("empty ratio range".into()));
    }
    if let Some(r) = ratios.iter().find(|&&r| r > 16) {
        return Err(Error::Config(format!("ratio {r} out of range 0..=16")));
    }
    Ok(())
}

/// Gram approximation error for every `(kernel, sampler, ratio, backend)`
/// cell and seed. Backends are calibrated on `train`; errors are measured
/// on the first `cfg.subset` rows of `test`.
pub fn approx_error_sweep(cfg: &ApproxErrorConfig, train: &Dataset, test: &Dataset) -> Result<Vec<ApproxRow>> {
    validate_ratios(&cfg.ratios)?;
    check_dim(train.dim(), test.dim())?;
    let x = test_subset(test, cfg.subset);
    let d = train.dim();
    let mut rows = Vec::new();
    for &kernel in &cfg.kernels {
        let exact = gram(kernel, &x, &x)?;
        for &sampler in &cfg.samplers {
            for &ratio in &cfg.ratios {
                for backend in &cfg.backends {
                    let errors = par::try_map_slice(&cfg.seeds, |&seed| -> Result<f64> {
                        if cfg.self_check {
                            return GramPair::new(exact.clone(), exact.clone())?.approx_error();
                        }
                        let proj = sample(FeatureMapSpec::with_log2_ratio(kernel, sampler, d, ratio, seed))?;
                        let hw = build_backend(&proj, &seeded_backend(backend, seed), &train.features)?;
                        let z = map_rows(&x, &proj, hw.as_ref(), seed.wrapping_add(1))?;
                        GramPair::new(exact.clone(), &z * z.transpose())?.approx_error()
                    })?;
                    rows.push(ApproxRow { dataset: cfg.dataset.clone(), kernel, sampler, log2_ratio: ratio, backend: backend.name(), errors });
                }
            }
        }
    }
    Ok(rows)
}

pub const APPROX_HEADER: &str = "dataset,kernel,sampler,log2_ratio,backend,mean_err,std_err,seeds";

pub fn approx_csv(rows: &[ApproxRow]) -> String {
    let mut s = format!("{APPROX_HEADER}\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{},{:e},{:e},{}", r.dataset, r.kernel, r.sampler, r.log2_ratio, r.backend, r.mean(), r.std(), r.errors.len());
    }
    s
}

#[derive(Clone, Debug, Serialize)]
pub struct RidgeConfig {
    pub dataset: String,
    pub kernels: Vec<KernelId>,
    pub samplers: Vec<Sampler>,
    /// `log2(D / d)` of the feature map.
    pub output_ratio: u32,
    pub backends: Vec<BackendKind>,
    pub seeds: Vec<u64>,
    pub lambda: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RidgeRow {
    pub dataset: String,
    pub kernel: KernelId,
    pub sampler: Sampler,
    pub backend: &'static str,
    pub eval: RidgeEvaluation,
}

impl RidgeRow {
    /// Mean of per-seed `acc(exact) - acc(backend)`.
    pub fn delta(&self) -> f64 {
        stats::mean_std(&self.eval.deltas()).0
    }
}

pub fn ridge_sweep(cfg: &RidgeConfig, train: &Dataset, test: &Dataset) -> Result<Vec<RidgeRow>> {
    let mut rows = Vec::new();
    for &kernel in &cfg.kernels {
        for &sampler in &cfg.samplers {
            let spec = FeatureMapSpec::with_output_ratio(kernel, sampler, train.dim(), cfg.output_ratio, 0);
            for backend in &cfg.backends {
                let eval = evaluate(train, test, spec, backend, &cfg.seeds, cfg.lambda)?;
                rows.push(RidgeRow { dataset: cfg.dataset.clone(), kernel, sampler, backend: backend.name(), eval });
            }
        }
    }
    Ok(rows)
}

pub const RIDGE_HEADER: &str = "dataset,kernel,sampler,backend,accuracy_mean,accuracy_std,delta_vs_exact";

pub fn ridge_csv(rows: &[RidgeRow]) -> String {
    let mut s = format!("{RIDGE_HEADER}\n");
    for r in rows {
        let (mean, std) = r.eval.backend_summary();
        let _ = writeln!(s, "{},{},{},{},{:.6},{:.6},{:.6}", r.dataset, r.kernel, r.sampler, r.backend, mean, std, r.delta());
    }
    s
}

/// `#`-prefixed provenance block: tool version, config echo and seeds.
pub fn provenance<C: Serialize>(command: &str, config: &C, seeds: &[u64]) -> Result<String> {
    let json = serde_json::to_string(config).map_err(|e| Error::Config(e.to_string()))?;
    let seeds: Vec<String> = seeds.iter().map(u64::to_string).collect();
    Ok(format!(
        "# {} {} {}\n# config: {}\n# seeds: {}\n",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION"),
        command,
        json,
        seeds.join(" ")
    ))
}

/// Writes `contents` to a temporary file next to `path` and renames it
/// into place, so a failed run never leaves a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}
