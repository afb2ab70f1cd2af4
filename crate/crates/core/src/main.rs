use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use kernel_aimc::analog::{AnalogTileConfig, BackendKind};
use kernel_aimc::attention::{error_table_csv, AttentionExperiment, AttentionFeatures};
use kernel_aimc::cost::{self, HardwareProfile, PAPER_GEOMETRIES};
use kernel_aimc::exact::KernelId;
use kernel_aimc::experiments::{self, ApproxErrorConfig, RidgeConfig};
use kernel_aimc::features::{sample, write_projection, FeatureMapSpec, Sampler};
use kernel_aimc::ridge::{DEFAULT_LAMBDA, GRAM_SUBSET};

#[derive(Parser)]
#[command(name = "kaimc", version, about = "Random-feature kernel approximation on a simulated analog crossbar")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Gram-matrix approximation error against feature dimension.
    ApproxError(ApproxArgs),
    /// Ridge classification accuracy, exact vs backend features.
    Ridge(RidgeArgs),
    /// Attention approximation error of random-feature attention.
    Attention(AttentionArgs),
    /// Mapping latency and energy on hardware profiles.
    Cost(CostArgs),
    /// Sample a projection matrix and dump it.
    Sample(SampleArgs),
}

#[derive(Args)]
struct BackendArgs {
    /// Comma-separated list of `exact`, `analog`.
    #[arg(long, default_value = "exact,analog")]
    backend: String,
    #[arg(long)]
    eta_w: Option<f64>,
    #[arg(long)]
    eta_out: Option<f64>,
    /// Clip weights at this many standard deviations, or `none`.
    #[arg(long)]
    clip_alpha: Option<String>,
    /// Base seed for analog noise.
    #[arg(long, default_value_t = 0)]
    noise_seed: u64,
}

impl BackendArgs {
    fn kinds(&self) -> anyhow::Result<Vec<BackendKind>> {
        let mut cfg = AnalogTileConfig { seed: self.noise_seed, ..Default::default() };
        if let Some(v) = self.eta_w {
            cfg.eta_w = v;
        }
        if let Some(v) = self.eta_out {
            cfg.eta_out = v;
        }
        if let Some(v) = &self.clip_alpha {
            cfg.clip_alpha = match v.as_str() {
                "none" | "off" => None,
                s => Some(s.parse().with_context(|| format!("bad --clip-alpha `{s}`"))?),
            };
        }
        cfg.validate()?;
        split_list(&self.backend)
            .map(|b| match b {
                "exact" => Ok(BackendKind::Exact),
                "analog" => Ok(BackendKind::Analog(cfg)),
                _ => bail!("unknown backend `{b}` (expected exact or analog)"),
            })
            .collect()
    }
}

#[derive(Args)]
struct Common {
    /// `blobs`, `clusters`, a manifest entry or a LIBSVM/CSV file.
    #[arg(long, default_value = "blobs")]
    dataset: String,
    /// Comma-separated kernels.
    #[arg(long, default_value = "rbf,arccos0")]
    kernel: String,
    /// Comma-separated samplers.
    #[arg(long, default_value = "rff,orf,sorf")]
    sampler: String,
    /// Seed list: `0..10`, `0..=9` or `1,2,5`.
    #[arg(long, default_value = "0..10")]
    seeds: String,
    /// Seed of the train/test split.
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    #[command(flatten)]
    backend: BackendArgs,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ApproxArgs {
    #[command(flatten)]
    common: Common,
    /// `log2(m/d)` values, same syntax as `--seeds`.
    #[arg(long, default_value = "1..=5")]
    ratios: String,
    #[arg(long, default_value_t = GRAM_SUBSET)]
    subset: usize,
    /// Compare the exact Gram matrix with itself.
    #[arg(long)]
    self_check: bool,
}

#[derive(Args)]
struct RidgeArgs {
    #[command(flatten)]
    common: Common,
    /// `log2(D/d)` of the feature map.
    #[arg(long, default_value_t = 5)]
    ratio: u32,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum AttentionPreset {
    /// L=4096, d=16, 15 seeds.
    Paper,
    /// L=256, d=16, 15 seeds.
    Desk,
}

#[derive(Args)]
struct AttentionArgs {
    #[arg(long, value_enum, default_value = "desk")]
    preset: AttentionPreset,
    /// Sequence length; overrides the preset.
    #[arg(short = 'L', long = "len")]
    len: Option<usize>,
    #[arg(long)]
    d_head: Option<usize>,
    /// Comma-separated feature counts; defaults to d, 2d, 4d, 8d.
    #[arg(long)]
    m: Option<String>,
    #[arg(long, default_value = "rff,orf")]
    sampler: String,
    /// Comma-separated `positive`, `trig`, `relu`.
    #[arg(long, default_value = "positive,trig")]
    features: String,
    #[arg(long)]
    seeds: Option<String>,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum CostPreset {
    Paper,
}

#[derive(Args)]
struct CostArgs {
    /// Reproduce the published comparison table.
    #[arg(long, value_enum)]
    preset: Option<CostPreset>,
    /// Profile file with lines `name tops watts [tops_per_watt]`.
    #[arg(long)]
    profiles: Option<PathBuf>,
    /// Restrict to these profiles (comma-separated).
    #[arg(long)]
    profile: Option<String>,
    #[arg(short = 'L', long = "len", default_value_t = 1024)]
    len: usize,
    #[arg(long, default_value_t = 512)]
    d: usize,
    #[arg(long, default_value_t = 1024)]
    m: usize,
    /// Emit CSV instead of the text table.
    #[arg(long)]
    csv: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long, default_value = "rbf")]
    kernel: KernelId,
    #[arg(long, default_value = "rff")]
    sampler: Sampler,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty())
}

fn parse_list<T: std::str::FromStr>(s: &str) -> anyhow::Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let v: Vec<T> = split_list(s).map(|t| t.parse::<T>().map_err(|e| anyhow::anyhow!("{e}"))).collect::<Result<_, _>>()?;
    if v.is_empty() {
        bail!("empty list `{s}`");
    }
    Ok(v)
}

/// `a..b`, `a..=b` or a comma list of integers.
fn parse_range(s: &str) -> anyhow::Result<Vec<u64>> {
    let mut out = Vec::new();
    for part in split_list(s) {
        if let Some((a, b)) = part.split_once("..") {
            let (b, inclusive) = match b.strip_prefix('=') {
                Some(b) => (b, true),
                None => (b, false),
            };
            let a: u64 = a.parse().with_context(|| format!("bad range `{part}`"))?;
            let b: u64 = b.parse().with_context(|| format!("bad range `{part}`"))?;
            let end = if inclusive { b.checked_add(1).context("range overflow")? } else { b };
            if end <= a {
                bail!("empty range `{part}`");
            }
            out.extend(a..end);
        } else {
            out.push(part.parse().with_context(|| format!("bad integer `{part}`"))?);
        }
    }
    if out.is_empty() {
        bail!("empty range `{s}`");
    }
    Ok(out)
}

fn emit(out: Option<&PathBuf>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => experiments::write_atomic(p, text.as_bytes()).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn approx_error(a: ApproxArgs) -> anyhow::Result<()> {
    let c = &a.common;
    let ratios = parse_range(&a.ratios)?.into_iter().map(u32::try_from).collect::<Result<Vec<_>, _>>()?;
    let cfg = ApproxErrorConfig {
        dataset: c.dataset.clone(),
        kernels: parse_list(&c.kernel)?,
        samplers: parse_list(&c.sampler)?,
        ratios,
        backends: c.backend.kinds()?,
        seeds: parse_range(&c.seeds)?,
        self_check: a.self_check,
        subset: a.subset,
    };
    experiments::validate_ratios(&cfg.ratios)?;
    let (train, test) = experiments::load_dataset(&c.dataset, c.split_seed)?;
    let rows = experiments::approx_error_sweep(&cfg, &train, &test)?;
    let head = experiments::provenance("approx-error", &cfg, &cfg.seeds)?;
    emit(c.out.as_ref(), &(head + &experiments::approx_csv(&rows)))
}

fn ridge(a: RidgeArgs) -> anyhow::Result<()> {
    let c = &a.common;
    let cfg = RidgeConfig {
        dataset: c.dataset.clone(),
        kernels: parse_list(&c.kernel)?,
        samplers: parse_list(&c.sampler)?,
        output_ratio: a.ratio,
        backends: c.backend.kinds()?,
        seeds: parse_range(&c.seeds)?,
        lambda: a.lambda,
    };
    let (train, test) = experiments::load_dataset(&c.dataset, c.split_seed)?;
    let rows = experiments::ridge_sweep(&cfg, &train, &test)?;
    let head = experiments::provenance("ridge", &cfg, &cfg.seeds)?;
    emit(c.out.as_ref(), &(head + &experiments::ridge_csv(&rows)))
}

fn attention(a: AttentionArgs) -> anyhow::Result<()> {
    let (len, d_head) = match a.preset {
        AttentionPreset::Paper => (4096, 16),
        AttentionPreset::Desk => (256, 16),
    };
    let len = a.len.unwrap_or(len);
    let d_head = a.d_head.unwrap_or(d_head);
    let features = match &a.m {
        Some(m) => parse_list(m)?,
        None => vec![d_head, 2 * d_head, 4 * d_head, 8 * d_head],
    };
    let exp = AttentionExperiment {
        len,
        d_head,
        features,
        samplers: parse_list(&a.sampler)?,
        kinds: parse_list::<AttentionFeatures>(&a.features)?,
        backends: a.backend.kinds()?,
        seeds: parse_range(a.seeds.as_deref().unwrap_or("0..15"))?,
    };
    let rows = exp.run()?;
    let head = experiments::provenance("attention", &exp, &exp.seeds)?;
    emit(a.out.as_ref(), &(head + &error_table_csv(&rows)))
}

fn cost_cmd(a: CostArgs) -> anyhow::Result<()> {
    let mut profiles = match &a.profiles {
        Some(p) => cost::load_profiles(p).with_context(|| format!("reading {}", p.display()))?,
        None => cost::builtin_profiles(),
    };
    if let Some(names) = &a.profile {
        profiles = split_list(names).map(|n| cost::find_profile(&profiles, n).cloned()).collect::<Result<Vec<HardwareProfile>, _>>()?;
    }
    if profiles.is_empty() {
        bail!("no hardware profiles");
    }
    let geometries = match a.preset {
        Some(CostPreset::Paper) => PAPER_GEOMETRIES.to_vec(),
        None => {
            if a.len == 0 || a.d == 0 || a.m == 0 {
                bail!("L, d and m must be positive");
            }
            vec![(a.len, a.d, a.m)]
        }
    };
    let cells = cost::cost_table(&geometries, &profiles);
    let text = if a.csv || a.out.is_some() { cost::cost_csv(&cells) } else { cost::cost_text_table(&cells, &profiles) };
    emit(a.out.as_ref(), &text)
}

fn sample_cmd(a: SampleArgs) -> anyhow::Result<()> {
    let proj = sample(FeatureMapSpec::new(a.kernel, a.sampler, a.d, a.m, a.seed))?;
    let mut buf = Vec::new();
    write_projection(&proj, &mut buf)?;
    experiments::write_atomic(&a.out, &buf).with_context(|| format!("writing {}", a.out.display()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let msg = e.to_string();
            let line = msg.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("kaimc: {line}");
            return ExitCode::from(2);
        }
        Err(e) => e.exit(),
    };
    let r = match cli.command {
        Command::ApproxError(a) => approx_error(a),
        Command::Ridge(a) => ridge(a),
        Command::Attention(a) => attention(a),
        Command::Cost(a) => cost_cmd(a),
        Command::Sample(a) => sample_cmd(a),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kaimc: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::from(2)
        }
    }
}
