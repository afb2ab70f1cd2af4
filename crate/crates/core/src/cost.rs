//! FLOP accounting and latency / energy estimates for the feature mapping.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The profiles shipped in `data/profiles.txt`.
pub const BUILTIN_PROFILES: &str = include_str!("../data/profiles.txt");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardwareProfile {
    pub name: String,
    pub throughput_tops: f64,
    pub power_watts: f64,
    /// Measured TOPS/W. When present, energy is derived from it instead of
    /// `latency * power`.
    pub efficiency_tops_per_watt: Option<f64>,
}

impl HardwareProfile {
    pub fn new(name: impl Into<String>, throughput_tops: f64, power_watts: f64) -> Result<Self> {
        let p = HardwareProfile { name: name.into(), throughput_tops, power_watts, efficiency_tops_per_watt: None };
        p.validate()?;
        Ok(p)
    }

    pub fn with_efficiency(mut self, tops_per_watt: f64) -> Result<Self> {
        self.efficiency_tops_per_watt = Some(tops_per_watt);
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.throughput_tops) || !pos(self.power_watts) || !self.efficiency_tops_per_watt.is_none_or(pos) {
            return Err(Error::Config(format!("profile {}: throughput, power and efficiency must be positive", self.name)));
        }
        Ok(())
    }

    /// `(latency seconds, energy joules)` for `ops` operations.
    pub fn cost(&self, ops: f64) -> (f64, f64) {
        let latency = ops / (self.throughput_tops * 1e12);
        let energy = match self.efficiency_tops_per_watt {
            Some(eff) => ops / (eff * 1e12),
            None => latency * self.power_watts,
        };
        (latency, energy)
    }
}

/// Parses lines `name throughput_tops power_watts [efficiency_tops_per_watt]`.
/// Blank lines and `#` comments are skipped.
pub fn parse_profiles(text: &str) -> Result<Vec<HardwareProfile>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if !(3..=4).contains(&f.len()) {
            return Err(Error::parse(i + 1, "expected `name throughput_tops power_watts [efficiency]`"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| Error::parse(i + 1, format!("bad number {s:?}")));
        let mut p = HardwareProfile::new(f[0], num(f[1])?, num(f[2])?).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        if let Some(e) = f.get(3) {
            p = p.with_efficiency(num(e)?).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        }
        out.push(p);
    }
    Ok(out)
}

pub fn load_profiles(path: &Path) -> Result<Vec<HardwareProfile>> {
    parse_profiles(&std::fs::read_to_string(path)?)
}

pub fn builtin_profiles() -> Vec<HardwareProfile> {
    parse_profiles(BUILTIN_PROFILES).expect("bundled profile file parses")
}

pub fn find_profile<'a>(profiles: &'a [HardwareProfile], name: &str) -> Result<&'a HardwareProfile> {
    profiles.iter().find(|p| p.name.eq_ignore_ascii_case(name)).ok_or_else(|| Error::unknown("profile", name))
}

/// Operations of the mapping `L x d` times `d x m`, two per multiply-accumulate.
pub fn mapping_ops(len: usize, d: usize, m: usize) -> f64 {
    2.0 * len as f64 * d as f64 * m as f64
}

pub fn mapping_cost(len: usize, d: usize, m: usize, profile: &HardwareProfile) -> (f64, f64) {
    profile.cost(mapping_ops(len, d, m))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FlopMethod {
    HighDimMapping,
    ExactKernel,
    KernelApprox,
    AimcDeploy,
}

impl FlopMethod {
    pub const ALL: [FlopMethod; 4] = [FlopMethod::HighDimMapping, FlopMethod::ExactKernel, FlopMethod::KernelApprox, FlopMethod::AimcDeploy];

    pub fn name(self) -> &'static str {
        match self {
            FlopMethod::HighDimMapping => "highdim",
            FlopMethod::ExactKernel => "exact",
            FlopMethod::KernelApprox => "approx",
            FlopMethod::AimcDeploy => "aimc",
        }
    }
}

impl fmt::Display for FlopMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FlopMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "highdim" | "highdimmapping" => Ok(FlopMethod::HighDimMapping),
            "exact" | "exactkernel" => Ok(FlopMethod::ExactKernel),
            "approx" | "kernelapprox" => Ok(FlopMethod::KernelApprox),
            "aimc" | "aimcdeploy" => Ok(FlopMethod::AimcDeploy),
            _ => Err(Error::unknown("method", s)),
        }
    }
}

/// Geometry for [`inference_flops`]. `n` training samples, `h` Hilbert-space
/// dimension, `d` inputs, `m` projections, `dd` features.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopParams {
    pub n: u64,
    pub h: u64,
    pub d: u64,
    pub m: u64,
    pub dd: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopReport {
    pub method: FlopMethod,
    pub digital_flops: u64,
    pub analog_flops: u64,
}

impl FlopReport {
    pub fn total(&self) -> u64 {
        self.digital_flops + self.analog_flops
    }
}

/// Per-sample inference cost.
pub fn inference_flops(method: FlopMethod, p: FlopParams) -> FlopReport {
    let (digital, analog) = match method {
        FlopMethod::HighDimMapping => (4 * p.h * p.d + 2 * p.h, 0),
        FlopMethod::ExactKernel => (2 * p.d * p.n, 0),
        FlopMethod::KernelApprox => (4 * p.m * p.d + 2 * p.dd, 0),
        FlopMethod::AimcDeploy => (2 * p.dd, 4 * p.m * p.d),
    };
    FlopReport { method, digital_flops: digital, analog_flops: analog }
}

/// `(L, d, m)` geometries of the published comparison table.
pub const PAPER_GEOMETRIES: [(usize, usize, usize); 2] = [(1024, 512, 1024), (1024, 1024, 2048)];

#[derive(Clone, Debug, PartialEq)]
pub struct CostCell {
    pub len: usize,
    pub d: usize,
    pub m: usize,
    pub profile: String,
    pub latency_s: f64,
    pub energy_j: f64,
}

pub fn cost_table(geometries: &[(usize, usize, usize)], profiles: &[HardwareProfile]) -> Vec<CostCell> {
    let mut out = Vec::new();
    for &(len, d, m) in geometries {
        for p in profiles {
            let (latency_s, energy_j) = mapping_cost(len, d, m, p);
            out.push(CostCell { len, d, m, profile: p.name.clone(), latency_s, energy_j });
        }
    }
    out
}

pub const COST_HEADER: &str = "L,d,m,profile,latency_ms,energy_mJ";

/// CSV rows with latency in ms and energy in mJ, four decimals.
pub fn cost_csv(cells: &[CostCell]) -> String {
    let mut s = String::from(COST_HEADER);
    s.push('\n');
    for c in cells {
        s.push_str(&format!("{},{},{},{},{:.4},{:.4}\n", c.len, c.d, c.m, c.profile, c.latency_s * 1e3, c.energy_j * 1e3));
    }
    s
}

/// The comparison table layout: one block per geometry, latency and energy
/// rows, one column per profile.
pub fn cost_text_table(cells: &[CostCell], profiles: &[HardwareProfile]) -> String {
    let mut s = format!("{:<14}", "");
    for p in profiles {
        s.push_str(&format!("{:>12}", p.name));
    }
    s.push('\n');
    for block in cells.chunks(profiles.len()) {
        let c = &block[0];
        s.push_str(&format!("L = {}, d = {}, m = {}\n", c.len, c.d, c.m));
        s.push_str(&format!("{:<14}", "Latency (ms)"));
        for c in block {
            s.push_str(&format!("{:>12.4}", c.latency_s * 1e3));
        }
        s.push_str(&format!("\n{:<14}", "Energy (mJ)"));
        for c in block {
            s.push_str(&format!("{:>12.4}", c.energy_j * 1e3));
        }
        s.push('\n');
    }
    s
}
