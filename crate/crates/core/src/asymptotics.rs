//! Limit laws for the longest run, evaluated and checked against simulation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::longest_run::{longest_run_length, replicate_seed};
use crate::markov_exact::{rho_exact, RhoMethod, DEFAULT_RHO_TOL};
use crate::net::{generate_net, node_uniform, NetConfig};
use crate::scalar::{is_probability, Real};

/// `1 - exp(-m θ_n)`.
pub fn poisson_approx_across<T: Real>(m: usize, theta_n: T) -> Result<T> {
    ensure!(is_probability(theta_n), Precondition, "theta_n = {theta_n} is not a probability");
    Ok(-(-T::of(m as f64) * theta_n).exp_m1())
}

/// The growth region `c1 n^{1+δ1} ≤ m ≤ c2 exp(n(φ - δ2))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InflatingRegion<T> {
    pub c1: T,
    pub c2: T,
    pub delta1: T,
    pub delta2: T,
    pub phi: T,
}

impl<T: Real> InflatingRegion<T> {
    pub fn new(c1: T, c2: T, delta1: T, delta2: T, phi: T) -> Result<Self> {
        let all = [c1, c2, delta1, delta2, phi];
        ensure!(all.iter().all(|&x| x > T::zero() && x.is_finite()), InvalidConfig, "region parameters must be positive");
        Ok(Self { c1, c2, delta1, delta2, phi })
    }

    /// Compared in log space so huge `n` cannot overflow the upper envelope.
    pub fn contains(&self, m: usize, n: usize) -> bool {
        let (lm, ln_n) = (T::of(m as f64).ln(), T::of(n as f64).ln());
        let lower = self.c1.ln() + (T::one() + self.delta1) * ln_n;
        let upper = self.c2.ln() + T::of(n as f64) * (self.phi - self.delta2);
        lower <= lm && lm <= upper
    }

    /// The envelopes cross for all large `n` exactly when `δ2 ≥ φ`.
    pub fn is_eventually_empty(&self) -> bool {
        self.delta2 >= self.phi
    }
}

pub fn region_membership<T: Real>(region: &InflatingRegion<T>, m: usize, n: usize) -> bool {
    region.contains(m, n)
}

/// Number of leading columns (`0..=n`) spanned by an across run, simulated
/// lazily from column 1 with the node draws of [`generate_net`].
fn across_depth(config: &NetConfig) -> usize {
    let (m, c) = (config.row_dims[0].m, config.row_dims[0].c);
    let key = config.node_key();
    let mut frontier: Vec<usize> = (0..m).filter(|&r| node_uniform(key, m, 0, r) < config.p).collect();
    let mut next = Vec::new();
    for col in 1..config.n {
        if frontier.is_empty() {
            return col - 1;
        }
        next.clear();
        let mut free = 0;
        for &r in &frontier {
            for s in r.saturating_sub(c).max(free)..(r + c + 1).min(m) {
                if node_uniform(key, m, col, s) < config.p {
                    next.push(s);
                }
            }
            free = r + c + 1;
        }
        std::mem::swap(&mut frontier, &mut next);
    }
    if frontier.is_empty() {
        config.n - 1
    } else {
        config.n
    }
}

/// Across depths of `replicates` planar nets (replicate `i` uses
/// `replicate_seed(seed, i)`, as in the histogram sweeps).
pub fn across_depths(m: usize, n: usize, c: usize, p: f64, replicates: usize, seed: u64) -> Result<Vec<usize>> {
    let base = NetConfig::planar(m, n, c, p, seed);
    base.validate()?;
    Ok((0..replicates).into_par_iter().map(|i| across_depth(&base.with_seed(replicate_seed(seed, i)))).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub estimate: f64,
    pub stderr: f64,
    pub replicates: usize,
}

impl Proportion {
    pub fn new(hits: usize, replicates: usize) -> Self {
        let estimate = hits as f64 / replicates as f64;
        Self { estimate, stderr: (estimate * (1.0 - estimate) / replicates as f64).sqrt(), replicates }
    }
}

/// Monte Carlo frequency of an across in an `m × n` net.
pub fn across_frequency(m: usize, n: usize, c: usize, p: f64, replicates: usize, seed: u64) -> Result<Proportion> {
    ensure!(replicates >= 1, Precondition, "replicates must be positive");
    let depths = across_depths(m, n, c, p, replicates, seed)?;
    Ok(Proportion::new(depths.iter().filter(|&&d| d == n).count(), replicates))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioProbe {
    pub m: usize,
    pub n: usize,
    pub p: f64,
    /// `P̂_n / P̂_{n-1}` on nested nets (the first `n - 1` columns of each net).
    pub rho_hat: f64,
    /// Delta-method standard error of the ratio.
    pub stderr: f64,
    pub replicates: usize,
}

/// Empirical conditional across probability `ρ̂_n(m, p)`.
pub fn empirical_rho(m: usize, n: usize, c: usize, p: f64, replicates: usize, seed: u64) -> Result<RatioProbe> {
    ensure!(n >= 2, Precondition, "need at least two columns");
    let depths = across_depths(m, n, c, p, replicates, seed)?;
    let full = depths.iter().filter(|&&d| d == n).count();
    let prior = depths.iter().filter(|&&d| d >= n - 1).count();
    ensure!(prior > 0, InsufficientData, "no across in {n} - 1 columns among {replicates} replicates");
    let rho_hat = full as f64 / prior as f64;
    // given `prior` survivors the ratio is binomial
    let stderr = (rho_hat * (1.0 - rho_hat) / prior as f64).sqrt();
    Ok(RatioProbe { m, n, p, rho_hat, stderr, replicates })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateEntry {
    pub m: usize,
    pub n: usize,
    pub mean_ratio: f64,
    pub stderr: f64,
    pub replicates: usize,
    pub in_region: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub c: usize,
    pub p: f64,
    pub phi_hat: f64,
    /// `1 / φ̂`, the limit of `|L0| / log(mn)`.
    pub target: f64,
    pub entries: Vec<RateEntry>,
}

impl RateTable {
    pub fn deviations(&self) -> Vec<f64> {
        self.entries.iter().map(|e| (e.mean_ratio - self.target).abs()).collect()
    }

    /// `m,n,mean_ratio,stderr,replicates,target,in_region`
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["m", "n", "mean_ratio", "stderr", "replicates", "target", "in_region"])?;
        for e in &self.entries {
            w.write_record([
                e.m.to_string(),
                e.n.to_string(),
                format!("{:.10}", e.mean_ratio),
                format!("{:.10}", e.stderr),
                e.replicates.to_string(),
                format!("{:.10}", self.target),
                e.in_region.map(|b| b.to_string()).unwrap_or_default(),
            ])?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf8"))
    }
}

/// `|L0(m, n)| / log(mn)` along a ladder of sizes.
pub fn rate_sweep(
    c: usize,
    p: f64,
    phi_hat: f64,
    sizes: &[(usize, usize)],
    replicates: usize,
    seed: u64,
    region: Option<&InflatingRegion<f64>>,
) -> Result<RateTable> {
    ensure!(phi_hat > 0.0, Precondition, "phi_hat must be positive (p must be subcritical)");
    ensure!(replicates >= 2, Precondition, "need at least two replicates");
    ensure!(!sizes.is_empty(), Precondition, "empty size ladder");
    ensure!(
        sizes.windows(2).all(|w| w[0].0 * w[0].1 < w[1].0 * w[1].1),
        Precondition,
        "sizes must increase in m·n"
    );
    ensure!(sizes.iter().all(|&(m, n)| m * n >= 2), Precondition, "m·n must exceed 1");
    let entries = sizes
        .iter()
        .enumerate()
        .map(|(i, &(m, n))| {
            let base = NetConfig::planar(m, n, c, p, crate::rng::derive(seed, i as u64));
            base.validate()?;
            let log_mn = ((m * n) as f64).ln();
            let ratios: Vec<f64> = (0..replicates)
                .into_par_iter()
                .map(|r| {
                    let net = generate_net(&base.with_seed(replicate_seed(base.seed, r))).expect("validated");
                    longest_run_length(&net) as f64 / log_mn
                })
                .collect();
            let k = replicates as f64;
            let mean = ratios.iter().sum::<f64>() / k;
            let var = ratios.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
            Ok(RateEntry {
                m,
                n,
                mean_ratio: mean,
                stderr: (var / k).sqrt(),
                replicates,
                in_region: region.map(|r| r.contains(m, n)),
            })
        })
        .collect::<Result<_>>()?;
    Ok(RateTable { c, p, phi_hat, target: 1.0 / phi_hat, entries })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GumbelFit {
    pub m: usize,
    #[serde(rename = "C")]
    pub c: usize,
    pub p: f64,
    pub n: usize,
    pub rho: f64,
    #[serde(rename = "A1")]
    pub a1: f64,
    pub ks_distance: f64,
    pub replicates: usize,
}

impl GumbelFit {
    /// `log_{1/ρ} n`
    pub fn location(&self) -> f64 {
        (self.n as f64).ln() / -self.rho.ln()
    }

    /// Limit law `P(|L0| < x) ≈ exp(-A1 ρ^{x - location})`.
    pub fn cdf_below(&self, x: f64) -> f64 {
        gumbel_below(self.a1, self.rho, self.location(), x)
    }
}

fn gumbel_below(a1: f64, rho: f64, loc: f64, x: f64) -> f64 {
    (-a1 * rho.powf(x - loc)).exp()
}

/// Log-likelihood of integer lengths under `P(L = ℓ) = G(ℓ + 1) - G(ℓ)`.
fn lattice_loglik(counts: &[(usize, usize)], log_a: f64, rho: f64, loc: f64) -> f64 {
    let a = log_a.exp();
    counts
        .iter()
        .map(|&(len, k)| {
            let hi = gumbel_below(a, rho, loc, len as f64 + 1.0);
            let lo = gumbel_below(a, rho, loc, len as f64);
            k as f64 * (hi - lo).max(1e-300).ln()
        })
        .sum()
}

/// Fits `A1` by maximum likelihood to simulated `|L0(m, n)|` for fixed `m`,
/// with `ρ` taken from the exact ratio limit.
pub fn gumbel_fit(m: usize, c: usize, p: f64, n: usize, replicates: usize, seed: u64) -> Result<GumbelFit> {
    ensure!(p > 0.0 && p < 1.0, Precondition, "p must lie in (0, 1)");
    ensure!(replicates >= 2, Precondition, "need at least two replicates");
    let rho = rho_exact(m, c, p, DEFAULT_RHO_TOL * 1e-2, RhoMethod::RatioLimit)?.rho;
    let base = NetConfig::planar(m, n, c, p, seed);
    base.validate()?;
    let lengths: Vec<usize> = (0..replicates)
        .into_par_iter()
        .map(|i| longest_run_length(&generate_net(&base.with_seed(replicate_seed(seed, i))).expect("validated")))
        .collect();
    gumbel_fit_lengths(m, c, p, n, rho, &lengths)
}

/// The fitting half of [`gumbel_fit`], for lengths simulated elsewhere.
pub fn gumbel_fit_lengths(m: usize, c: usize, p: f64, n: usize, rho: f64, lengths: &[usize]) -> Result<GumbelFit> {
    ensure!(rho > 0.0 && rho < 1.0, Precondition, "rho must lie in (0, 1)");
    let mut sorted = lengths.to_vec();
    sorted.sort_unstable();
    ensure!(
        sorted.first() != sorted.last(),
        Degenerate,
        "all {} lengths equal {:?}; A1 is not identifiable",
        lengths.len(),
        sorted.first()
    );
    let mut counts: Vec<(usize, usize)> = Vec::new();
    for &l in &sorted {
        match counts.last_mut() {
            Some((len, k)) if *len == l => *k += 1,
            _ => counts.push((l, 1)),
        }
    }
    let loc = (n as f64).ln() / -rho.ln();
    // golden-section search on ln A1
    let (mut a, mut b) = (-30.0f64, 30.0f64);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (lattice_loglik(&counts, x1, rho, loc), lattice_loglik(&counts, x2, rho, loc));
    while b - a > 1e-10 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = lattice_loglik(&counts, x2, rho, loc);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = lattice_loglik(&counts, x1, rho, loc);
        }
    }
    let a1 = (0.5 * (a + b)).exp();

    // both distribution functions are step functions jumping at the integers
    let total = lengths.len() as f64;
    let mut below = 0usize;
    let mut ks = gumbel_below(a1, rho, loc, counts[0].0 as f64);
    for &(len, k) in &counts {
        below += k;
        let model = gumbel_below(a1, rho, loc, len as f64 + 1.0);
        ks = ks.max((below as f64 / total - model).abs());
    }
    Ok(GumbelFit { m, c, p, n, rho, a1, ks_distance: ks, replicates: lengths.len() })
}
