//! Target tracking: birth, drift and death of targets on a line of `m`
//! locations, observed through additive Gaussian noise.
//!
//! `X[t][j]` is the occupancy of location `j` at time `t` (both 0-based in
//! storage). Each step every empty location spawns a target with probability
//! `p0`; every target moves left, stays, or moves right with probabilities
//! `p1, p2, p3` and otherwise vanishes; arrivals at one location merge. A move
//! off either end removes the target.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{normal_upper_quantile, Decision};
use crate::error::{ensure, Result};
use crate::longest_run::longest_run_length;
use crate::markov_exact::{rho_exact, RhoMethod, DEFAULT_RHO_TOL, MAX_ROWS};
use crate::net::{Net, NetConfig};
use crate::rng::{derive, domain, uniform, CounterRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackSceneConfig {
    pub m: usize,
    pub n: usize,
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub sigma: f64,
    /// 1-based locations occupied at the first time step.
    #[serde(default)]
    pub initial: Vec<usize>,
}

impl TrackSceneConfig {
    /// Pure noise: no targets ever.
    pub fn null(m: usize, n: usize, sigma: f64) -> Self {
        Self { m, n, p0: 0.0, p1: 0.0, p2: 0.0, p3: 0.0, sigma, initial: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.m >= 1 && self.n >= 1, InvalidConfig, "m and n must be positive");
        for (name, p) in [("p0", self.p0), ("p1", self.p1), ("p2", self.p2), ("p3", self.p3)] {
            ensure!((0.0..=1.0).contains(&p), InvalidConfig, "{name} = {p} is not a probability");
        }
        ensure!(self.p1 + self.p2 + self.p3 <= 1.0 + 1e-12, InvalidConfig, "p1 + p2 + p3 exceeds 1");
        ensure!(self.sigma >= 0.0 && self.sigma.is_finite(), InvalidConfig, "sigma must be finite and nonnegative");
        ensure!(
            self.initial.iter().all(|&j| j >= 1 && j <= self.m),
            OutOfBounds,
            "initial locations must lie in [1, m]"
        );
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackScene {
    pub config: TrackSceneConfig,
    pub seed: u64,
    /// `x[t][j]`
    pub x: Vec<Vec<bool>>,
    /// `z[t][j] = x[t][j] + noise`
    pub z: Vec<Vec<f64>>,
}

impl TrackScene {
    pub fn occupancy(&self) -> f64 {
        let hits: usize = self.x.iter().map(|row| row.iter().filter(|&&b| b).count()).sum();
        hits as f64 / (self.config.m * self.config.n) as f64
    }

    /// Frames as `t,location,x,z` (1-based `t` and location).
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["t", "location", "x", "z"])?;
        for (t, (xs, zs)) in self.x.iter().zip(&self.z).enumerate() {
            for (j, (&x, &z)) in xs.iter().zip(zs).enumerate() {
                w.write_record([(t + 1).to_string(), (j + 1).to_string(), (x as u8).to_string(), format!("{z:.10}")])?;
            }
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf8"))
    }

    /// Observation matrix from `t,location,x,z` frames.
    pub fn z_from_csv(text: &str) -> Result<Vec<Vec<f64>>> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let mut cells = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let field = |i: usize| -> Result<&str> {
                rec.get(i).ok_or_else(|| crate::Error::Format("short track frame row".into()))
            };
            let parse_idx = |s: &str| s.trim().parse::<usize>().map_err(|e| crate::Error::Format(e.to_string()));
            let t = parse_idx(field(0)?)?;
            let j = parse_idx(field(1)?)?;
            let z: f64 = field(3)?.trim().parse().map_err(|e: std::num::ParseFloatError| crate::Error::Format(e.to_string()))?;
            ensure!(t >= 1 && j >= 1, Format, "frame indices are 1-based");
            cells.push((t - 1, j - 1, z));
        }
        let n = cells.iter().map(|c| c.0 + 1).max().unwrap_or(0);
        let m = cells.iter().map(|c| c.1 + 1).max().unwrap_or(0);
        ensure!(cells.len() == m * n && n > 0, Format, "frames do not form a full {n} x {m} grid");
        let mut z = vec![vec![f64::NAN; m]; n];
        for (t, j, v) in cells {
            z[t][j] = v;
        }
        ensure!(z.iter().flatten().all(|v| !v.is_nan()), Format, "duplicate frame cells");
        Ok(z)
    }
}

/// Runs the motion model and adds noise. Step `t → t + 1` draws two uniforms
/// per location from the `TRACK` stream; noise comes from the `NOISE` stream,
/// one row per time step.
pub fn simulate_track(config: &TrackSceneConfig, seed: u64) -> Result<TrackScene> {
    config.validate()?;
    let (m, n) = (config.m, config.n);
    let motion = derive(seed, domain::TRACK);
    let mut x = vec![vec![false; m]; n];
    for &j in &config.initial {
        x[0][j - 1] = true;
    }
    let (c1, c2, c3) = (config.p1, config.p1 + config.p2, config.p1 + config.p2 + config.p3);
    for t in 0..n - 1 {
        let key = derive(motion, t as u64);
        let mut next = vec![false; m];
        for j in 0..m {
            if !x[t][j] {
                if uniform(key, 2 * j as u64) < config.p0 {
                    next[j] = true;
                }
                continue;
            }
            let u = uniform(key, 2 * j as u64 + 1);
            if u < c1 {
                if j > 0 {
                    next[j - 1] = true;
                }
            } else if u < c2 {
                next[j] = true;
            } else if u < c3 && j + 1 < m {
                next[j + 1] = true;
            }
        }
        x[t + 1] = next;
    }
    let noise = derive(seed, domain::NOISE);
    let z = x
        .iter()
        .enumerate()
        .map(|(t, row)| {
            let mut rng = CounterRng::new(derive(noise, t as u64));
            row.iter()
                .map(|&b| b as u8 as f64 + config.sigma * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    Ok(TrackScene { config: config.clone(), seed, x, z })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum TrackMode {
    /// `(1 + δ4) log_{1/ρ(m, p)} n`, exact `ρ`; needs `m ≤ 12`.
    FixedM,
    /// `(1 + δ4) log(mn) / φ(p)` with a fitted `φ(p)`.
    Inflating { phi: f64 },
}

pub const DEFAULT_DELTA4: f64 = 0.1;
pub const DEFAULT_P_TARGET: f64 = 0.3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackTest {
    pub z_star: f64,
    pub significant_fraction: f64,
    pub decision: Decision,
}

/// Decision threshold on the longest run for an `m × n` frame stack.
pub fn track_threshold(m: usize, n: usize, p_target: f64, mode: TrackMode, delta4: f64) -> Result<f64> {
    ensure!(p_target > 0.0 && p_target < 1.0 / 3.0, Precondition, "p_target = {p_target} must lie in (0, 1/3)");
    ensure!(delta4 >= 0.0, Precondition, "delta4 must be nonnegative");
    match mode {
        TrackMode::FixedM => {
            ensure!(m <= MAX_ROWS, Precondition, "fixed-m mode needs m <= {MAX_ROWS}, got {m}");
            let rho = rho_exact(m, 1, p_target, DEFAULT_RHO_TOL, RhoMethod::RatioLimit)?.rho;
            Ok((1.0 + delta4) * (n as f64).ln() / -rho.ln())
        }
        TrackMode::Inflating { phi } => {
            ensure!(phi > 0.0, Precondition, "phi must be positive");
            Ok((1.0 + delta4) * ((m * n) as f64).ln() / phi)
        }
    }
}

/// Thresholds `z` at `σ · z_{1 - p_target}` and compares the longest `C = 1`
/// run (time as the column axis) with the mode's threshold.
pub fn track_test(z: &[Vec<f64>], sigma: f64, p_target: f64, mode: TrackMode, delta4: f64, seed: u64) -> Result<TrackTest> {
    ensure!(!z.is_empty() && !z[0].is_empty(), Precondition, "empty observation matrix");
    ensure!(sigma > 0.0, Precondition, "sigma must be positive");
    let (n, m) = (z.len(), z[0].len());
    ensure!(z.iter().all(|row| row.len() == m), Precondition, "ragged observation matrix");
    let threshold = track_threshold(m, n, p_target, mode, delta4)?;
    let z_star = sigma * normal_upper_quantile(p_target);
    let net = Net::from_fn(&NetConfig::planar(m, n, 1, p_target, seed), |t, j| z[t][j] > z_star)?;
    let length = longest_run_length(&net);
    Ok(TrackTest {
        z_star,
        significant_fraction: net.count_significant() as f64 / (m * n) as f64,
        decision: Decision { decision: length as f64 > threshold, statistic: length as f64, threshold, scale: None, seed },
    })
}
