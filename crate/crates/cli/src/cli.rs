use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "bernet", version, about = "Longest significant runs in Bernoulli nets")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Master seed (default 1).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Data output file; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Worker threads; falls back to BERNET_THREADS.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// JSON parameters or a run manifest. Flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum RhoRoute {
    Stationary,
    RatioLimit,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThetaRoute {
    Auto,
    Naive,
    Splitting,
    Exact,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HypothesisArg {
    H0,
    H1,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackModeArg {
    Fixed,
    Inflating,
}

/// Accepts `1000`, `1e6` or `2.5e3`, as long as the value is a whole number.
pub fn parse_count(s: &str) -> Result<usize, String> {
    if let Ok(n) = s.parse::<usize>() {
        return Ok(n);
    }
    let x: f64 = s.parse().map_err(|_| format!("`{s}` is not a count"))?;
    if x >= 0.0 && x.fract() == 0.0 && x <= usize::MAX as f64 {
        Ok(x as usize)
    } else {
        Err(format!("`{s}` is not a whole nonnegative number"))
    }
}

pub mod count {
    use serde::{de::Error, Deserialize, Deserializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(u64),
        Float(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<usize, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Int(n) => Ok(n as usize),
            Raw::Float(x) => super::parse_count(&x.to_string()).map_err(D::Error::custom),
            Raw::Text(s) => super::parse_count(&s).map_err(D::Error::custom),
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Draw one net and list its significant nodes.
    SimulateNet(NetArgs),
    /// Longest significant run of one net, with a witness path.
    LongestRun(NetArgs),
    /// Histogram of the longest run over replicate nets.
    Hist(HistArgs),
    /// Origin survival probabilities θ_k(p) in the pseudo-tree.
    Theta(ThetaArgs),
    /// Decay-rate fit φ(p) with sandwich constants.
    Phi(PhiArgs),
    /// Bracket for the critical probability.
    Pc(PcArgs),
    /// Exact conditional across probability ρ(m, p).
    RhoExact(RhoArgs),
    /// ρ over the reference grid or a user grid.
    Table1(TableArgs),
    /// Bounds on P(|L0| < k) from exact across probabilities.
    StabBounds(StabArgs),
    /// Poisson approximation of the across probability.
    PoissonApprox(PoissonArgs),
    /// |L0| / log(mn) along a ladder of net sizes.
    RateCheck(RateArgs),
    /// Fit of the extreme-value law for fixed m.
    Gumbel(GumbelArgs),
    /// Error rates of the longest-run test for a planted chain.
    DetectAnomaly(AnomalyArgs),
    /// Multiscale filament test on a point cloud.
    DetectFilament(FilamentArgs),
    /// Counting, length and strength thresholds of the filament test.
    Thresholds(ThresholdArgs),
    /// Simulate moving targets observed in noise.
    TrackSim(TrackSimArgs),
    /// Longest-run test on target-tracking frames.
    TrackTest(TrackTestArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SimulateNet(_) => "simulate-net",
            Command::LongestRun(_) => "longest-run",
            Command::Hist(_) => "hist",
            Command::Theta(_) => "theta",
            Command::Phi(_) => "phi",
            Command::Pc(_) => "pc",
            Command::RhoExact(_) => "rho-exact",
            Command::Table1(_) => "table1",
            Command::StabBounds(_) => "stab-bounds",
            Command::PoissonApprox(_) => "poisson-approx",
            Command::RateCheck(_) => "rate-check",
            Command::Gumbel(_) => "gumbel",
            Command::DetectAnomaly(_) => "detect-anomaly",
            Command::DetectFilament(_) => "detect-filament",
            Command::Thresholds(_) => "thresholds",
            Command::TrackSim(_) => "track-sim",
            Command::TrackTest(_) => "track-test",
        }
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct NetArgs {
    #[arg(long, default_value_t = 64)]
    pub m: usize,
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    #[arg(long = "C", default_value_t = 1)]
    pub c: usize,
    #[arg(long, default_value_t = 0.2)]
    pub p: f64,
    /// Transverse extents of a multi-axis net (overrides --m).
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    /// Per-axis connectivity of a multi-axis net (overrides --C).
    #[arg(long, value_delimiter = ',')]
    pub reach: Option<Vec<usize>>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct HistArgs {
    #[arg(long, default_value_t = 128)]
    pub m: usize,
    #[arg(long, default_value_t = 128)]
    pub n: usize,
    #[arg(long = "C", default_value_t = 1)]
    pub c: usize,
    #[arg(long, default_value_t = 0.2)]
    pub p: f64,
    #[arg(long, default_value = "1000", value_parser = parse_count)]
    #[serde(deserialize_with = "count::deserialize")]
    pub reps: usize,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ThetaArgs {
    /// Connectivity per transverse axis, e.g. `4,4`.
    #[arg(long = "C", value_delimiter = ',', default_value = "1")]
    pub c: Vec<usize>,
    #[arg(long, default_value_t = 0.2)]
    pub p: f64,
    #[arg(long, default_value_t = 40)]
    pub kmax: usize,
    #[arg(long, default_value = "100000", value_parser = parse_count)]
    #[serde(deserialize_with = "count::deserialize")]
    pub reps: usize,
    #[arg(long, value_enum, default_value_t = ThetaRoute::Auto)]
    pub method: ThetaRoute,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct PhiArgs {
    #[arg(long = "C", value_delimiter = ',', default_value = "1")]
    pub c: Vec<usize>,
    #[arg(long, default_value_t = 0.2)]
    pub p: f64,
    #[arg(long, default_value_t = 40)]
    pub kmax: usize,
    #[arg(long, default_value = "64000", value_parser = parse_count)]
    #[serde(deserialize_with = "count::deserialize")]
    pub reps: usize,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct PcArgs {
    #[arg(long = "C", value_delimiter = ',', default_value = "1")]
    pub c: Vec<usize>,
    #[arg(long, default_value_t = 256)]
    pub depth: usize,
    #[arg(long, default_value_t = 0.05)]
    pub threshold: f64,
    #[arg(long, default_value = "2000", value_parser = parse_count)]
    #[serde(deserialize_with = "count::deserialize")]
    pub reps: usize,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct RhoArgs {
    #[arg(long, default_value_t = 4)]
    pub m: usize,
    #[arg(long = "C", default_value_t = 1)]
    pub c: usize,
    #[arg(long, default_value_t = 0.3)]
    pub p: f64,
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    #[arg(long, value_enum, default_value_t = RhoRoute::Stationary)]
    pub method: RhoRoute,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct TableArgs {
    #[arg(long, value_delimiter = ',', default_value = "4,8,10")]
    pub ms: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5,0.6")]
    pub ps: Vec<f64>,
    #[arg(long = "C", default_value_t = 1)]
    pub c: usize,
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    #[arg(long, value_enum, default_value_t = RhoRoute::Stationary)]
    pub method: RhoRoute,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct StabArgs {
    #[arg(long, default_value_t = 3)]
    pub m: usize,
    #[arg(long, default_value_t = 5)]
    pub n: usize,
    #[arg(long = "C", default_value_t = 1)]
    pub c: usize,
    #[arg(long, default_value_t = 0.3)]
    pub p: f64,
    /// A single k; every k in 1..=n when absent.
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct PoissonArgs {
    #[arg(long, default_value_t = 2000)]
    pub m: usize,
    #[arg(long, default_value_t = 30)]
    pub n: usize,
    #[arg(long = "C", default_value_t = 1)]
    pub c: usize,
    #[arg(long, default_value_t = 0.2)]
    pub p: f64,
    /// θ_n; estimated on the pseudo-tree when absent.
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long, default_value = "64000", value_parser = parse_count)]
    #[serde(deserialize_with = "count::deserialize")]
    pub reps: usize,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct PhiSource {
    /// Use this φ instead of fitting one.
    #[arg(long)]
    pub phi: Option<f64>,
    #[arg(long, default_value_t = 40)]
    pub phi_kmax: usize,
    #[arg(long, default_value = "64000", value_parser = parse_count)]
    #[serde(deserialize_with = "count::deserialize")]
    pub phi_reps: usize,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct RateArgs {
    #[arg(long = "C", default_value_t = 1)]
    pub c: usize,
    #[arg(long, default_value_t = 0.2)]
    pub p: f64,
    /// Net sizes `MxN`, increasing in m·n.
    #[arg(long, value_delimiter = ',', default_value = "64x64,128x128,256x256")]
    pub sizes: Vec<String>,
    #[arg(long, default_value = "1000", value_parser = parse_count)]
    #[serde(deserialize_with = "count::deserialize")]
    pub reps: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub phi: PhiSource,
    #[arg(long, default_value_t = 1.0)]
    pub c1: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c2: f64,
    #[arg(long, default_value_t = 0.1)]
    pub delta1: f64,
    #[arg(long, default_value_t = 0.1)]
    pub delta2: f64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct GumbelArgs {
    #[arg(long, default_value_t = 1)]
    pub m: usize,
    #[arg(long = "C", default_value_t = 1)]
    pub c: usize,
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value = "1000", value_parser = parse_count)]
    #[serde(deserialize_with = "count::deserialize")]
    pub reps: usize,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct AnomalyArgs {
    #[arg(long, default_value_t = 256)]
    pub m: usize,
    #[arg(long, default_value_t = 256)]
    pub n: usize,
    #[arg(long = "C", default_value_t = 1)]
    pub c: usize,
    #[arg(long, default_value_t = 0.2)]
    pub p0: f64,
    #[arg(long, default_value_t = 0.8)]
    pub p1: f64,
    /// Columns spanned by the planted chain (default n).
    #[arg(long)]
    pub chain_length: Option<usize>,
    #[arg(long, default_value = "200", value_parser = parse_count)]
    #[serde(deserialize_with = "count::deserialize")]
    pub reps: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub phi: PhiSource,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdArgs {
    #[arg(long = "N", default_value_t = 2048)]
    pub n_points: usize,
    #[arg(long, default_value_t = 2.0)]
    pub alpha: f64,
    /// Treat α as unknown and cap the scales at ⌊0.5001 J⌋.
    #[arg(long)]
    pub unknown_alpha: bool,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long = "S", default_value_t = 1.0)]
    pub s: f64,
    #[arg(long, default_value_t = 0.1)]
    pub delta3: f64,
    #[arg(long = "N-star", default_value_t = 6)]
    pub n_star: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub phi: PhiSource,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct FilamentArgs {
    /// Point cloud as CSV `x,y`; a scene is simulated when absent.
    #[arg(long)]
    pub points: Option<PathBuf>,
    /// Thresholds JSON written by `thresholds --format json`.
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = HypothesisArg::H0)]
    pub hypothesis: HypothesisArg,
    /// Fraction of points on the curve; `eps_factor · T* · N^{-α/(1+α)}` when absent.
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, default_value_t = 2.0)]
    pub eps_factor: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub scene: ThresholdArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct TrackSimArgs {
    #[arg(long, default_value_t = 256)]
    pub m: usize,
    #[arg(long, default_value_t = 256)]
    pub n: usize,
    /// Birth probability per empty location and step.
    #[arg(long, default_value_t = 0.0)]
    pub p0: f64,
    /// Move-left probability.
    #[arg(long, default_value_t = 0.0)]
    pub p1: f64,
    /// Stay probability.
    #[arg(long, default_value_t = 0.0)]
    pub p2: f64,
    /// Move-right probability.
    #[arg(long, default_value_t = 0.0)]
    pub p3: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// 1-based locations occupied at t = 1.
    #[arg(long, value_delimiter = ',')]
    pub initial: Option<Vec<usize>>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct TrackTestArgs {
    /// Frames as CSV `t,location,x,z`; a scene is simulated when absent.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 0.3)]
    pub p_target: f64,
    #[arg(long, value_enum, default_value_t = TrackModeArg::Inflating)]
    pub mode: TrackModeArg,
    #[arg(long, default_value_t = 0.1)]
    pub delta4: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub phi: PhiSource,
    #[command(flatten)]
    #[serde(flatten)]
    pub scene: TrackSimArgs,
}
