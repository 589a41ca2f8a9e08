//! Origin-rooted runs in the pseudo-tree lattice.
//!
//! Column `i ≥ 0` of the lattice holds the transverse coordinates
//! `|j_a| ≤ C_a·i` on every axis `a`, and node `(i, j)` points to every
//! `(i + 1, j + s)` with `|s_a| ≤ C_a`. `θ_k(p)` is the probability that the
//! origin reaches column `k - 1` through significant nodes.
//!
//! Simulation only tracks the frontier, the reachable significant nodes of the
//! current column, as a sorted list of linear indices. Column `i` uses offsets
//! `o_a = j_a + C_a·i ∈ [0, 2C_a·i]`, so the children of offset `o` are
//! `o ..= o + 2C_a` in the next column.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::rng::{derive, domain, uniform, CounterRng};
use crate::scalar::{is_probability, Real};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudoTreeConfig {
    #[serde(rename = "C")]
    pub c: Vec<usize>,
    pub p: f64,
}

impl PseudoTreeConfig {
    pub fn new(c: Vec<usize>, p: f64) -> Result<Self> {
        let config = Self { c, p };
        config.validate()?;
        Ok(config)
    }

    pub fn planar(c: usize, p: f64) -> Self {
        Self { c: vec![c], p }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.c.is_empty(), InvalidConfig, "C must name at least one axis");
        ensure!(self.c.iter().all(|&c| c >= 1), InvalidConfig, "every C_k must be positive");
        ensure!(is_probability(self.p), InvalidConfig, "p = {} is not a probability", self.p);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    /// `∏ (2C_k + 1)`, the out-degree of every node.
    pub fn branching(&self) -> usize {
        self.c.iter().map(|&c| 2 * c + 1).product()
    }

    /// Nodes in column `i`.
    pub fn column_size(&self, i: usize) -> usize {
        self.c.iter().map(|&c| 2 * c * i + 1).product()
    }

    pub fn with_p(&self, p: f64) -> Self {
        Self { c: self.c.clone(), p }
    }
}

/// One column step of the frontier. `frontier` holds sorted linear indices in
/// column `col`; `out` receives the sorted open children in column `col + 1`,
/// whose states are `uniform(key, index) < p`.
fn step_frontier(c: &[usize], col: usize, frontier: &[u64], key: u64, p: f64, out: &mut Vec<u64>, cand: &mut Vec<u64>) {
    out.clear();
    if let [c] = *c {
        let reach = 2 * c as u64;
        let mut next_free = 0u64;
        for &o in frontier {
            for child in o.max(next_free)..=o + reach {
                if uniform(key, child) < p {
                    out.push(child);
                }
            }
            next_free = o + reach + 1;
        }
        return;
    }
    let d = c.len();
    let old_w: Vec<u64> = c.iter().map(|&c| (2 * c * col + 1) as u64).collect();
    let new_w: Vec<u64> = c.iter().map(|&c| (2 * c * (col + 1) + 1) as u64).collect();
    let mut base = vec![0u64; d];
    let mut offset = vec![0u64; d];
    cand.clear();
    for &idx in frontier {
        let mut rest = idx;
        for a in (0..d).rev() {
            base[a] = rest % old_w[a];
            rest /= old_w[a];
        }
        offset.iter_mut().for_each(|o| *o = 0);
        'odometer: loop {
            let mut lin = 0u64;
            for a in 0..d {
                lin = lin * new_w[a] + base[a] + offset[a];
            }
            cand.push(lin);
            let mut a = d;
            loop {
                if a == 0 {
                    break 'odometer;
                }
                a -= 1;
                offset[a] += 1;
                if offset[a] <= 2 * c[a] as u64 {
                    break;
                }
                offset[a] = 0;
            }
        }
    }
    cand.sort_unstable();
    cand.dedup();
    out.extend(cand.iter().copied().filter(|&i| uniform(key, i) < p));
}

/// Frontier size beyond which a trajectory counts as surviving.
pub type SaturationCap = Option<usize>;

/// Deepest column reached from the origin, capped at `depth`. `None` when the
/// origin is closed. `uniform(derive(key, i), ·)` drives column `i`, so runs
/// with the same key at different `p` are coupled.
fn run_trajectory(c: &[usize], p: f64, depth: usize, key: u64, cap: SaturationCap) -> Option<usize> {
    if uniform(derive(key, 0), 0) >= p {
        return None;
    }
    let mut frontier = vec![0u64];
    let (mut next, mut cand) = (Vec::new(), Vec::new());
    for col in 0..depth {
        step_frontier(c, col, &frontier, derive(key, col as u64 + 1), p, &mut next, &mut cand);
        if next.is_empty() {
            return Some(col);
        }
        if cap.is_some_and(|cap| next.len() >= cap) {
            return Some(depth);
        }
        std::mem::swap(&mut frontier, &mut next);
    }
    Some(depth)
}

fn naive_key(seed: u64, replicate: usize) -> u64 {
    derive(derive(seed, domain::CHAIN), replicate as u64)
}

/// `survivors[i]` = replicates whose origin reaches column `i`, for
/// `i < k_max`.
fn naive_survivors(config: &PseudoTreeConfig, k_max: usize, replicates: usize, seed: u64, cap: SaturationCap) -> Vec<u64> {
    let deepest: Vec<Option<usize>> = (0..replicates)
        .into_par_iter()
        .map(|r| run_trajectory(&config.c, config.p, k_max - 1, naive_key(seed, r), cap))
        .collect();
    let mut reached = vec![0u64; k_max + 1];
    for d in deepest.into_iter().flatten() {
        reached[d] += 1;
    }
    let mut survivors = vec![0u64; k_max];
    let mut acc = 0;
    for i in (0..k_max).rev() {
        acc += reached[i];
        survivors[i] = acc;
    }
    survivors
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaEntry {
    pub k: usize,
    pub estimate: f64,
    pub stderr: f64,
    pub replicates: u64,
}

impl ThetaEntry {
    fn binomial(k: usize, hits: u64, replicates: u64) -> Self {
        let est = hits as f64 / replicates as f64;
        let stderr = (est * (1.0 - est) / replicates as f64).sqrt();
        Self { k, estimate: est, stderr, replicates }
    }

    pub fn relative_stderr(&self) -> f64 {
        if self.stderr == 0.0 {
            0.0
        } else {
            self.stderr / self.estimate
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaMethod {
    Naive,
    Splitting,
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaSeries {
    pub config: PseudoTreeConfig,
    pub method: ThetaMethod,
    pub entries: Vec<ThetaEntry>,
}

impl ThetaSeries {
    pub fn ks(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.k).collect()
    }

    pub fn get(&self, k: usize) -> Option<&ThetaEntry> {
        self.entries.iter().find(|e| e.k == k)
    }

    /// `k,estimate,stderr,replicates`
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for e in &self.entries {
            w.serialize(e)?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf8"))
    }

    pub fn from_csv(config: PseudoTreeConfig, method: ThetaMethod, text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let entries = r.deserialize().collect::<std::result::Result<Vec<ThetaEntry>, _>>()?;
        Ok(Self { config, method, entries })
    }
}

/// Plain Monte Carlo estimate of `θ_k(p)`.
pub fn theta_mc(config: &PseudoTreeConfig, k: usize, replicates: usize, seed: u64) -> Result<ThetaEntry> {
    config.validate()?;
    ensure!(k >= 1, Precondition, "k must be at least 1");
    ensure!(replicates >= 1, Precondition, "replicates must be positive");
    let survivors = naive_survivors(config, k, replicates, seed, None);
    Ok(ThetaEntry::binomial(k, survivors[k - 1], replicates as u64))
}

/// Plain Monte Carlo series for `k = 1..=k_max` from one set of trajectories.
/// Series at different `p` with the same seed are pathwise coupled.
pub fn theta_series_naive(config: &PseudoTreeConfig, k_max: usize, replicates: usize, seed: u64) -> Result<ThetaSeries> {
    config.validate()?;
    ensure!(k_max >= 1, Precondition, "k_max must be at least 1");
    ensure!(replicates >= 1, Precondition, "replicates must be positive");
    let survivors = naive_survivors(config, k_max, replicates, seed, None);
    let entries = survivors
        .iter()
        .enumerate()
        .map(|(i, &s)| ThetaEntry::binomial(i + 1, s, replicates as u64))
        .collect();
    Ok(ThetaSeries { config: config.clone(), method: ThetaMethod::Naive, entries })
}

pub const SPLITTING_BATCHES: usize = 16;
/// Survivor count at `k_max` below which the naive estimator hands over to
/// splitting.
pub const NAIVE_MIN_SURVIVORS: u64 = 50;

/// One fixed-effort splitting run: `r` particles per column, survivors
/// resampled back to `r` by systematic resampling. Returns `ln θ_k` for
/// `k = 1..=k_max` (`-∞` once every particle dies).
fn splitting_batch(config: &PseudoTreeConfig, k_max: usize, r: usize, key: u64) -> Vec<f64> {
    let mut log_theta = vec![f64::NEG_INFINITY; k_max];
    if config.p == 0.0 {
        return log_theta;
    }
    log_theta[0] = config.p.ln();
    let mut particles: Vec<Vec<u64>> = vec![vec![0u64]; r];
    let mut resample = CounterRng::new(derive(key, u64::MAX));
    for col in 0..k_max - 1 {
        let stage_key = derive(key, col as u64);
        let survivors: Vec<Vec<u64>> = particles
            .par_iter()
            .enumerate()
            .map_init(
                || (Vec::new(), Vec::new()),
                |(next, cand), (i, f)| {
                    step_frontier(&config.c, col, f, derive(stage_key, i as u64), config.p, next, cand);
                    next.clone()
                },
            )
            .filter(|f| !f.is_empty())
            .collect();
        if survivors.is_empty() {
            break;
        }
        log_theta[col + 1] = log_theta[col] + (survivors.len() as f64 / r as f64).ln();
        let s = survivors.len();
        let u = resample.uniform();
        particles = (0..r).map(|i| survivors[((i as f64 + u) * s as f64 / r as f64) as usize % s].clone()).collect();
    }
    log_theta
}

/// Multilevel splitting series over [`SPLITTING_BATCHES`] independent batches
/// sharing `replicates` particles; the standard error is the batch spread.
pub fn theta_series_splitting(config: &PseudoTreeConfig, k_max: usize, replicates: usize, seed: u64) -> Result<ThetaSeries> {
    config.validate()?;
    ensure!(k_max >= 1, Precondition, "k_max must be at least 1");
    let per_batch = replicates / SPLITTING_BATCHES;
    ensure!(per_batch >= 2, Precondition, "splitting needs at least {} replicates", 2 * SPLITTING_BATCHES);
    let root = derive(seed, domain::SPLIT);
    let batches: Vec<Vec<f64>> = (0..SPLITTING_BATCHES)
        .map(|b| splitting_batch(config, k_max, per_batch, derive(root, b as u64)))
        .collect();
    let b = SPLITTING_BATCHES as f64;
    let entries = (0..k_max)
        .map(|i| {
            let top = batches.iter().map(|l| l[i]).fold(f64::NEG_INFINITY, f64::max);
            let (estimate, stderr) = if top == f64::NEG_INFINITY {
                (0.0, 0.0)
            } else {
                let scaled: Vec<f64> = batches.iter().map(|l| (l[i] - top).exp()).collect();
                let mean = scaled.iter().sum::<f64>() / b;
                let var = scaled.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (b - 1.0);
                let scale = top.exp();
                (mean * scale, (var / b).sqrt() * scale)
            };
            ThetaEntry { k: i + 1, estimate, stderr, replicates: (per_batch * SPLITTING_BATCHES) as u64 }
        })
        .collect();
    Ok(ThetaSeries { config: config.clone(), method: ThetaMethod::Splitting, entries })
}

/// `θ_k` for `k = 1..=k_max`: plain Monte Carlo when at least
/// [`NAIVE_MIN_SURVIVORS`] trajectories reach `k_max`, multilevel splitting
/// otherwise.
pub fn theta_series(config: &PseudoTreeConfig, k_max: usize, replicates: usize, seed: u64) -> Result<ThetaSeries> {
    let naive = theta_series_naive(config, k_max, replicates, seed)?;
    let last = naive.entries.last().expect("k_max >= 1");
    if (last.estimate * replicates as f64).round() as u64 >= NAIVE_MIN_SURVIVORS || config.p == 0.0 {
        return Ok(naive);
    }
    theta_series_splitting(config, k_max, replicates, seed)
}

pub const EXACT_MAX_NODES: usize = 24;

/// Exact `θ_k(p)` by enumerating every state of the first `k` columns.
pub fn theta_exact<T: Real>(c: &[usize], p: T, k: usize) -> Result<T> {
    ensure!(!c.is_empty() && c.iter().all(|&c| c >= 1), InvalidConfig, "every C_k must be positive");
    ensure!(is_probability(p), InvalidConfig, "p = {p} is not a probability");
    ensure!(k >= 1, Precondition, "k must be at least 1");
    let config = PseudoTreeConfig { c: c.to_vec(), p: 0.0 };
    let sizes: Vec<usize> = (0..k).map(|i| config.column_size(i)).collect();
    let total: usize = sizes.iter().sum();
    ensure!(total <= EXACT_MAX_NODES, TooLarge, "{total} nodes exceed the enumeration limit {EXACT_MAX_NODES}");

    // bit layout: column 0 first, then column 1, ...
    let starts: Vec<usize> = sizes.iter().scan(0, |s, &n| { let v = *s; *s += n; Some(v) }).collect();
    let coords = |i: usize, mut lin: usize| -> Vec<i64> {
        let mut out = vec![0i64; c.len()];
        for a in (0..c.len()).rev() {
            let w = 2 * c[a] * i + 1;
            out[a] = (lin % w) as i64 - (c[a] * i) as i64;
            lin /= w;
        }
        out
    };
    // children[node] = bitmask over all nodes
    let mut children = vec![0u32; total];
    for i in 0..k.saturating_sub(1) {
        for a in 0..sizes[i] {
            let ja = coords(i, a);
            for b in 0..sizes[i + 1] {
                let jb = coords(i + 1, b);
                if ja.iter().zip(&jb).zip(c).all(|((x, y), &ca)| (x - y).unsigned_abs() as usize <= ca) {
                    children[starts[i] + a] |= 1 << (starts[i + 1] + b);
                }
            }
        }
    }
    let mut by_ones = vec![0u64; total + 1];
    for mask in 0u32..(1u32 << total) {
        let mut reach = mask & 1;
        for _ in 1..k {
            let mut next = 0u32;
            let mut r = reach;
            while r != 0 {
                next |= children[r.trailing_zeros() as usize];
                r &= r - 1;
            }
            reach = next & mask;
            if reach == 0 {
                break;
            }
        }
        if reach != 0 {
            by_ones[mask.count_ones() as usize] += 1;
        }
    }
    let q = T::one() - p;
    Ok(by_ones
        .iter()
        .enumerate()
        .filter(|(_, &n)| n > 0)
        .map(|(ones, &n)| T::of(n as f64) * p.powi(ones as i32) * q.powi((total - ones) as i32))
        .sum())
}

/// Exact series for `k = 1..=k_max` (zero standard errors).
pub fn theta_series_exact(config: &PseudoTreeConfig, k_max: usize) -> Result<ThetaSeries> {
    config.validate()?;
    let entries = (1..=k_max)
        .map(|k| {
            theta_exact(&config.c, config.p, k).map(|t| ThetaEntry { k, estimate: t, stderr: 0.0, replicates: 0 })
        })
        .collect::<Result<_>>()?;
    Ok(ThetaSeries { config: config.clone(), method: ThetaMethod::Exact, entries })
}

pub const FIT_MIN_K: usize = 8;
pub const FIT_RATIO_TOLERANCE: f64 = 0.10;
pub const FIT_MAX_RELATIVE_STDERR: f64 = 0.20;
pub const FIT_MIN_ENTRIES: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiFit {
    pub phi_hat: f64,
    pub k_window: (usize, usize),
    pub sigma1: f64,
    pub sigma2: f64,
    pub ratio_estimate: f64,
    /// Transverse dimension `d` of the fitted lattice.
    pub d: usize,
}

impl PhiFit {
    fn lower(&self, k: usize) -> f64 {
        self.sigma1 * (k as f64).powi(-(self.d as i32)) * (-(k as f64) * self.phi_hat).exp()
    }

    fn upper(&self, k: usize) -> f64 {
        self.sigma2 * (k as f64).powi(self.d as i32) * (-(k as f64) * self.phi_hat).exp()
    }

    /// Checks `σ1 k^-d e^{-kφ} ≤ θ_k ≤ σ2 k^d e^{-kφ}` on the window, with a
    /// relative slack for rounding (and for JSON round trips).
    pub fn sandwich_holds(&self, series: &ThetaSeries, rel_tol: f64) -> bool {
        series
            .entries
            .iter()
            .filter(|e| e.k >= self.k_window.0 && e.k <= self.k_window.1)
            .all(|e| {
                self.lower(e.k) <= e.estimate * (1.0 + rel_tol) && e.estimate <= self.upper(e.k) * (1.0 + rel_tol)
            })
    }
}

fn usable(e: &ThetaEntry) -> bool {
    e.estimate > 0.0 && e.relative_stderr() < FIT_MAX_RELATIVE_STDERR
}

/// Least-squares decay rate of `ln θ_k` over a window chosen from the series.
///
/// `k_max` is the largest `k` with relative standard error below 20%; `k_min`
/// is `max(8, first k after which successive ratios move by less than 10%)`.
/// If that leaves fewer than four entries the window is widened downwards.
pub fn phi_fit(series: &ThetaSeries) -> Result<PhiFit> {
    let mut entries: Vec<ThetaEntry> = series.entries.clone();
    entries.sort_by_key(|e| e.k);
    let usable_k: Vec<usize> = entries.iter().filter(|e| usable(e)).map(|e| e.k).collect();
    ensure!(
        usable_k.len() >= FIT_MIN_ENTRIES,
        InsufficientData,
        "only {} usable entries (need {FIT_MIN_ENTRIES}); raise replicates or enable splitting",
        usable_k.len()
    );
    let k_hi = *usable_k.last().unwrap();
    let prefix: Vec<&ThetaEntry> = entries.iter().filter(|e| e.k <= k_hi && usable(e)).collect();

    // first index past which successive ratios are stable
    let ratios: Vec<f64> = prefix.windows(2).map(|w| (w[1].estimate / w[0].estimate).powf(1.0 / (w[1].k - w[0].k) as f64)).collect();
    let mut stable_from = prefix.last().unwrap().k;
    for i in (1..ratios.len()).rev() {
        if (ratios[i] - ratios[i - 1]).abs() >= FIT_RATIO_TOLERANCE * ratios[i - 1] {
            break;
        }
        stable_from = prefix[i].k;
    }
    let mut k_lo = stable_from.max(FIT_MIN_K);
    let in_window = |lo: usize| prefix.iter().filter(|e| e.k >= lo).count();
    if in_window(k_lo) < FIT_MIN_ENTRIES {
        k_lo = prefix[prefix.len() - FIT_MIN_ENTRIES].k;
    }
    let window: Vec<&ThetaEntry> = prefix.iter().copied().filter(|e| e.k >= k_lo).collect();

    let xs: Vec<f64> = window.iter().map(|e| e.k as f64).collect();
    let ys: Vec<f64> = window.iter().map(|e| e.estimate.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let phi_hat = (-sxy / sxx).max(0.0);

    let d = series.config.dim() as i32;
    let scaled = |e: &ThetaEntry, sign: i32| e.estimate * (e.k as f64).powi(sign * d) * (e.k as f64 * phi_hat).exp();
    let sigma1 = window.iter().map(|e| scaled(e, 1)).fold(f64::INFINITY, f64::min);
    let sigma2 = window.iter().map(|e| scaled(e, -1)).fold(0.0, f64::max);

    let last = window[window.len() - 1];
    let prev = window[window.len() - 2];
    let ratio_estimate = (last.estimate / prev.estimate).powf(1.0 / (last.k - prev.k) as f64);

    Ok(PhiFit { phi_hat, k_window: (k_lo, k_hi), sigma1, sigma2, ratio_estimate, d: series.config.dim() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcBracket {
    pub lower: f64,
    pub upper: f64,
    pub depth: usize,
    #[serde(rename = "threshold")]
    pub survival_threshold: f64,
}

pub const DEFAULT_PC_DEPTH: usize = 256;
pub const DEFAULT_PC_THRESHOLD: f64 = 0.05;
/// A frontier this large survives the remaining columns with overwhelming
/// probability; the probe stops early and counts it as surviving.
pub const PC_SATURATION: usize = 512;
const PC_BISECTION_STEPS: usize = 14;

/// Fraction of trajectories whose origin reaches column `depth`.
pub fn survival_probability(c: &[usize], p: f64, depth: usize, replicates: usize, seed: u64) -> Result<f64> {
    let config = PseudoTreeConfig { c: c.to_vec(), p };
    config.validate()?;
    ensure!(replicates >= 1, Precondition, "replicates must be positive");
    let survivors = naive_survivors(&config, depth + 1, replicates, seed, Some(PC_SATURATION));
    Ok(survivors[depth] as f64 / replicates as f64)
}

/// Brackets `p_c` by bisection of the depth-`K` survival probability against
/// `threshold`. All probes share the seed, so the survival curve is monotone
/// in `p`. The lower end never falls below `1 / ∏(2C_k + 1)`.
pub fn pc_bracket(c: &[usize], depth: usize, threshold: f64, replicates: usize, seed: u64) -> Result<PcBracket> {
    ensure!(depth >= 32, Precondition, "depth K = {depth} must be at least 32");
    ensure!(threshold > 0.0 && threshold < 1.0, Precondition, "threshold must lie in (0, 1)");
    let floor = 1.0 / PseudoTreeConfig { c: c.to_vec(), p: 0.0 }.branching() as f64;
    let (mut lo, mut hi) = (0.0, 1.0);
    if survival_probability(c, hi, depth, replicates, seed)? < threshold {
        return Err(crate::Error::Internal("survival at p = 1 is below the threshold".into()));
    }
    for _ in 0..PC_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if survival_probability(c, mid, depth, replicates, seed)? >= threshold {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let lower = f64::max(lo, floor);
    Ok(PcBracket { lower, upper: hi.max(lower), depth, survival_threshold: threshold })
}

/// Pathwise comparison `θ̂_k(p_a) ≤ θ̂_k(p_b)` for every `k`.
pub fn monotonicity_check(a: &ThetaSeries, b: &ThetaSeries) -> Result<bool> {
    ensure!(a.config.c == b.config.c, Precondition, "series use different C");
    ensure!(a.ks() == b.ks(), Precondition, "series use different k grids");
    ensure!(a.config.p <= b.config.p, Precondition, "expected p_a <= p_b");
    Ok(a.entries.iter().zip(&b.entries).all(|(x, y)| x.estimate <= y.estimate))
}
