//! Multiscale significance-run detection of a filament in a point cloud.
//!
//! At scale `j` the unit square is covered by parallelograms with vertical
//! sides, `ω = 2^-j` wide and `t = 2^{-(J-j)+1}` high, centred at
//! `((k + ½)ω, ℓ1 δ1)` with midline slope `ℓ2 δ2`, where `δ1 = t/4` and
//! `δ2 = t/(4ω)`. A region is significant when it holds more than `N*`
//! points. Regions in horizontally adjacent strips are linked when
//! `(k, ℓ1, ℓ2) → (k + 1, ℓ1 + ℓ2 + u, ℓ2 + v)` with `|u|, |v| ≤ 4`, and the
//! test statistic is the longest significant path over scales `j ≤ c_J`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::poisson_tail;
use crate::error::{ensure, Result};
use crate::pseudo_tree::{phi_fit, theta_series, PhiFit, PseudoTreeConfig, ThetaSeries};
use crate::rng::{derive, domain, uniform, CounterRng};

pub const DEFAULT_N_STAR: u64 = 6;
pub const DEFAULT_DELTA3: f64 = 0.1;
/// Largest `|u|` and `|v|` in the good-continuation rule.
pub const CONTINUATION: i64 = 4;
/// Connectivity of the lattice whose decay rate sets the length threshold.
pub const MSRA_LATTICE: [usize; 2] = [4, 4];

/// `⌈log2 N⌉`
pub fn dyadic_log(n_points: usize) -> usize {
    n_points.max(1).next_power_of_two().trailing_zeros() as usize
}

/// Index ranges and spacings of the region family at one scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleGeometry {
    pub j: usize,
    #[serde(rename = "J")]
    pub big_j: usize,
    pub s: f64,
    pub n_k: usize,
    pub n_l1: usize,
    /// `ℓ2` runs over `-l2_max ..= l2_max`.
    pub l2_max: i64,
    pub omega: f64,
    pub t: f64,
    pub delta1: f64,
    pub delta2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub j: usize,
    pub k: usize,
    pub l1: usize,
    pub l2: i64,
    pub center: (f64, f64),
    pub slope: f64,
    pub width: f64,
    pub height: f64,
}

impl Region {
    /// Closed vertical-sided parallelogram.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let dx = x - self.center.0;
        dx.abs() <= 0.5 * self.width && (y - self.center.1 - self.slope * dx).abs() <= 0.5 * self.height
    }
}

impl ScaleGeometry {
    pub fn new(j: usize, big_j: usize, s: f64) -> Result<Self> {
        ensure!(j <= big_j, OutOfBounds, "scale j = {j} exceeds J = {big_j}");
        ensure!(s > 0.0 && s.is_finite(), InvalidConfig, "slope bound S must be positive");
        let omega = (-(j as f64)).exp2();
        let t = (1.0 - (big_j - j) as f64).exp2();
        let (delta1, delta2) = (t / 4.0, t / (4.0 * omega));
        Ok(Self {
            j,
            big_j,
            s,
            n_k: 1 << j,
            n_l1: (1.0 / delta1).round() as usize,
            l2_max: (s / delta2 + 1e-9).floor() as i64,
            omega,
            t,
            delta1,
            delta2,
        })
    }

    pub fn n_l2(&self) -> usize {
        (2 * self.l2_max + 1) as usize
    }

    /// Regions per strip (one column of the significance lattice).
    pub fn column_len(&self) -> usize {
        self.n_l1 * self.n_l2()
    }

    pub fn len(&self) -> usize {
        self.n_k * self.column_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Storage order: `k`, then `ℓ2`, then `ℓ1`.
    pub fn index(&self, k: usize, l1: usize, l2: i64) -> usize {
        (k * self.n_l2() + (l2 + self.l2_max) as usize) * self.n_l1 + l1
    }

    pub fn unindex(&self, idx: usize) -> (usize, usize, i64) {
        let l1 = idx % self.n_l1;
        let rest = idx / self.n_l1;
        let l2 = (rest % self.n_l2()) as i64 - self.l2_max;
        (rest / self.n_l2(), l1, l2)
    }

    pub fn region(&self, k: usize, l1: usize, l2: i64) -> Region {
        Region {
            j: self.j,
            k,
            l1,
            l2,
            center: ((k as f64 + 0.5) * self.omega, l1 as f64 * self.delta1),
            slope: l2 as f64 * self.delta2,
            width: self.omega,
            height: self.t,
        }
    }

    fn in_range(&self, k: i64, l1: i64, l2: i64) -> bool {
        k >= 0 && (k as usize) < self.n_k && l1 >= 0 && (l1 as usize) < self.n_l1 && l2.abs() <= self.l2_max
    }

    /// Good-continuation successors that exist at this scale.
    pub fn successors(&self, idx: usize) -> Vec<usize> {
        let (k, l1, l2) = self.unindex(idx);
        let mut out = Vec::new();
        for v in -CONTINUATION..=CONTINUATION {
            for u in -CONTINUATION..=CONTINUATION {
                let (k2, a, b) = (k as i64 + 1, l1 as i64 + l2 + u, l2 + v);
                if self.in_range(k2, a, b) {
                    out.push(self.index(k2 as usize, a as usize, b));
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Labelled region lattice at one scale. Counts saturate at `u16::MAX`.
#[derive(Clone, Debug, PartialEq)]
pub struct SignificanceGraph {
    pub geometry: ScaleGeometry,
    pub n_star: u64,
    pub counts: Vec<u16>,
}

impl SignificanceGraph {
    pub fn from_counts(geometry: ScaleGeometry, n_star: u64, counts: Vec<u16>) -> Result<Self> {
        ensure!(counts.len() == geometry.len(), Precondition, "count vector does not match the geometry");
        Ok(Self { geometry, n_star, counts })
    }

    pub fn is_significant(&self, idx: usize) -> bool {
        self.counts[idx] as u64 > self.n_star
    }

    pub fn significant_count(&self) -> usize {
        (0..self.counts.len()).filter(|&i| self.is_significant(i)).count()
    }

    /// Longest path of significant regions along good-continuation edges, by
    /// the column recursion `Y = s(R) (1 + max Y(predecessors))`.
    pub fn longest_significant_path(&self) -> usize {
        let g = &self.geometry;
        let col = g.column_len();
        let mut prev = vec![0u16; col];
        let mut next = vec![0u16; col];
        let mut best = 0u16;
        for k in 0..g.n_k {
            for (offset, y) in next.iter_mut().enumerate() {
                let idx = k * col + offset;
                *y = 0;
                if !self.is_significant(idx) {
                    continue;
                }
                let mut reach = 0u16;
                if k > 0 {
                    let (_, a, b) = g.unindex(idx);
                    for v in -CONTINUATION..=CONTINUATION {
                        let l2 = b - v;
                        if l2.abs() > g.l2_max {
                            continue;
                        }
                        for u in -CONTINUATION..=CONTINUATION {
                            let l1 = a as i64 - l2 - u;
                            if l1 >= 0 && (l1 as usize) < g.n_l1 {
                                reach = reach.max(prev[g.index(0, l1 as usize, l2)]);
                            }
                        }
                    }
                }
                *y = reach + 1;
            }
            best = best.max(next.iter().copied().max().unwrap_or(0));
            std::mem::swap(&mut prev, &mut next);
        }
        best as usize
    }
}

/// Counts every region of scale `j`. Points are bucketed by strip, and each
/// `(k, ℓ2)` block only tests the few `ℓ1` whose band can hold the point.
pub fn build_significance_graph(points: &[(f64, f64)], j: usize, big_j: usize, s: f64, n_star: u64) -> Result<SignificanceGraph> {
    let g = ScaleGeometry::new(j, big_j, s)?;
    let mut buckets: Vec<Vec<(f64, f64)>> = vec![Vec::new(); g.n_k];
    for &(x, y) in points {
        let kc = (x / g.omega).floor() as i64;
        for k in kc - 1..=kc + 1 {
            if k >= 0 && (k as usize) < g.n_k && (x - (k as f64 + 0.5) * g.omega).abs() <= 0.5 * g.omega {
                buckets[k as usize].push((x, y));
            }
        }
    }
    let mut counts = vec![0u16; g.len()];
    counts.par_chunks_mut(g.n_l1).enumerate().for_each(|(block, chunk)| {
        let k = block / g.n_l2();
        let l2 = (block % g.n_l2()) as i64 - g.l2_max;
        let probe = g.region(k, 0, l2);
        for &(x, y) in &buckets[k] {
            let v = (y - probe.slope * (x - probe.center.0)) / g.delta1;
            let lo = ((v - 2.0).ceil() as i64 - 1).max(0);
            let hi = ((v + 2.0).floor() as i64 + 1).min(g.n_l1 as i64 - 1);
            for l1 in lo..=hi {
                if g.region(k, l1 as usize, l2).contains(x, y) {
                    chunk[l1 as usize] = chunk[l1 as usize].saturating_add(1);
                }
            }
        }
    });
    SignificanceGraph::from_counts(g, n_star, counts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsraThresholds {
    pub n_points: usize,
    #[serde(rename = "J")]
    pub big_j: usize,
    /// `None` when the smoothness is unknown.
    pub alpha: Option<f64>,
    pub beta: f64,
    #[serde(rename = "S")]
    pub s: f64,
    pub delta3: f64,
    #[serde(rename = "N_star")]
    pub n_star: u64,
    pub p0: f64,
    pub phi_p0: f64,
    /// Seed of the decay-rate fit behind `phi_p0`, when it was fitted here.
    pub phi_seed: Option<u64>,
    #[serde(rename = "L_star")]
    pub l_star: f64,
    pub p_star: f64,
    pub lambda_star: f64,
    #[serde(rename = "T_star")]
    pub t_star: f64,
    #[serde(rename = "c_J")]
    pub c_j: usize,
}

const LAMBDA_GRID_START: f64 = 1e-3;
const LAMBDA_GRID_RATIO: f64 = 1.0001;
const LAMBDA_GRID_CAP: f64 = 1e6;

fn lambda_grid(i: usize) -> f64 {
    LAMBDA_GRID_START * LAMBDA_GRID_RATIO.powi(i as i32)
}

/// `c_J`; with unknown smoothness the scale cap `⌊0.5001 J⌋` is used.
pub fn containing_scale(big_j: usize, alpha: Option<f64>, beta: f64) -> usize {
    match alpha {
        Some(a) => (((big_j as f64 + beta.log2()) / (a + 1.0)).ceil().max(1.0)) as usize,
        None => ((0.5001 * big_j as f64).floor() as usize).max(1),
    }
}

/// `β^{1/(1+α)}`; unknown `α` takes the largest value over `(1, 2]`.
fn beta_factor(alpha: Option<f64>, beta: f64) -> f64 {
    match alpha {
        Some(a) => beta.powf(1.0 / (1.0 + a)),
        None => beta.sqrt().max(beta.cbrt()),
    }
}

/// Counting, length and strength thresholds for `N` points.
pub fn compute_thresholds(
    n_points: usize,
    alpha: Option<f64>,
    beta: f64,
    s: f64,
    delta3: f64,
    n_star: u64,
    phi_p0: f64,
) -> Result<MsraThresholds> {
    ensure!(n_points >= 2, Precondition, "need at least two points");
    if let Some(a) = alpha {
        ensure!(a > 1.0 && a <= 2.0, Precondition, "alpha = {a} must lie in (1, 2]");
    }
    ensure!(beta > 0.0, Precondition, "beta must be positive");
    ensure!(s > 0.0, Precondition, "S must be positive");
    ensure!(delta3 > 0.0 && delta3 < 1.0, Precondition, "delta3 must lie in (0, 1)");
    ensure!(phi_p0 > 0.0 && phi_p0.is_finite(), Precondition, "phi(p0) must be positive");
    let p0 = poisson_tail(2.0, n_star);
    ensure!(p0 < 1.0 / 81.0, Precondition, "N* = {n_star} gives p0 = {p0} >= 1/81");
    let big_j = dyadic_log(n_points);
    let jf = big_j as f64;
    let c_j = containing_scale(big_j, alpha, beta);
    let l_star = (1.0 + delta3) * 2.0 * jf * std::f64::consts::LN_2 / phi_p0;
    let p_star = (-phi_p0 * c_j as f64 * (1.0 - delta3) / (2.0 * jf * (1.0 + delta3))).exp();
    // the tail is increasing in λ, so bisect over grid indices
    let top = ((LAMBDA_GRID_CAP / LAMBDA_GRID_START).ln() / LAMBDA_GRID_RATIO.ln()).floor() as usize;
    ensure!(
        poisson_tail(lambda_grid(top), n_star) > p_star,
        NonConvergence,
        "no lambda below {LAMBDA_GRID_CAP} has tail above p* = {p_star}"
    );
    let (mut lo, mut hi) = (0usize, top);
    if poisson_tail(lambda_grid(0), n_star) > p_star {
        hi = 0;
    }
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if poisson_tail(lambda_grid(mid), n_star) > p_star {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let lambda_star = lambda_grid(hi);
    let t_star = 2.0 * lambda_star * beta_factor(alpha, beta) * (1.0 + s * s).sqrt();
    Ok(MsraThresholds {
        n_points,
        big_j,
        alpha,
        beta,
        s,
        delta3,
        n_star,
        p0,
        phi_p0,
        phi_seed: None,
        l_star,
        p_star,
        lambda_star,
        t_star,
        c_j,
    })
}

impl MsraThresholds {
    /// Recomputes every defining relation.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let jf = self.big_j as f64;
        let close = |a: f64, b: f64| (a - b).abs() <= tol * b.abs().max(1.0);
        ensure!(self.big_j == dyadic_log(self.n_points), Internal, "J mismatch");
        ensure!(close(self.p0, poisson_tail(2.0, self.n_star)) && self.p0 < 1.0 / 81.0, Internal, "p0 mismatch");
        ensure!(
            close(self.l_star, (1.0 + self.delta3) * 2.0 * jf * std::f64::consts::LN_2 / self.phi_p0),
            Internal,
            "L* mismatch"
        );
        ensure!(
            close(
                self.p_star,
                (-self.phi_p0 * self.c_j as f64 * (1.0 - self.delta3) / (2.0 * jf * (1.0 + self.delta3))).exp()
            ),
            Internal,
            "p* mismatch"
        );
        ensure!(poisson_tail(self.lambda_star, self.n_star) > self.p_star, Internal, "lambda* fails its inequality");
        ensure!(
            close(self.t_star, 2.0 * self.lambda_star * beta_factor(self.alpha, self.beta) * (1.0 + self.s * self.s).sqrt()),
            Internal,
            "T* mismatch"
        );
        ensure!(self.c_j == containing_scale(self.big_j, self.alpha, self.beta), Internal, "c_J mismatch");
        Ok(())
    }

    /// `ε = factor · T* · N^{-α/(1+α)}`.
    pub fn epsilon(&self, factor: f64) -> f64 {
        let a = self.alpha.unwrap_or(2.0);
        (factor * self.t_star * (self.n_points as f64).powf(-a / (1.0 + a))).min(1.0)
    }
}

pub const DEFAULT_PHI_KMAX: usize = 40;
pub const DEFAULT_PHI_REPLICATES: usize = 64_000;

/// `φ(p0)` on the `C = (4, 4)` pseudo-tree.
pub fn msra_phi_fit(p0: f64, k_max: usize, replicates: usize, seed: u64) -> Result<(PhiFit, ThetaSeries)> {
    let config = PseudoTreeConfig::new(MSRA_LATTICE.to_vec(), p0)?;
    let series = theta_series(&config, k_max, replicates, seed)?;
    Ok((phi_fit(&series)?, series))
}

/// Thresholds with `φ(p0)` fitted on the spot; the fit's seed is recorded.
pub fn compute_thresholds_fitted(
    n_points: usize,
    alpha: Option<f64>,
    beta: f64,
    s: f64,
    delta3: f64,
    n_star: u64,
    phi_seed: u64,
) -> Result<MsraThresholds> {
    let p0 = poisson_tail(2.0, n_star);
    let (fit, _) = msra_phi_fit(p0, DEFAULT_PHI_KMAX, DEFAULT_PHI_REPLICATES, phi_seed)?;
    let mut t = compute_thresholds(n_points, alpha, beta, s, delta3, n_star, fit.phi_hat)?;
    t.phi_seed = Some(phi_seed);
    Ok(t)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsraResult {
    pub decision: bool,
    pub l_max: usize,
    /// Longest significant path at each scale `0..=c_J`.
    pub per_scale: Vec<usize>,
    /// Scale attaining `l_max` (the smallest, on ties).
    pub scale: usize,
    pub threshold: f64,
}

/// Rejects `H0` when the longest significant path over scales `j ≤ c_J`
/// exceeds `L*`.
pub fn msra_test(points: &[(f64, f64)], thresholds: &MsraThresholds) -> Result<MsraResult> {
    let top = thresholds.c_j.min(thresholds.big_j);
    let per_scale = (0..=top)
        .map(|j| {
            build_significance_graph(points, j, thresholds.big_j, thresholds.s, thresholds.n_star)
                .map(|g| g.longest_significant_path())
        })
        .collect::<Result<Vec<_>>>()?;
    let l_max = per_scale.iter().copied().max().unwrap_or(0);
    let scale = per_scale.iter().position(|&l| l == l_max).unwrap_or(0);
    Ok(MsraResult { decision: l_max as f64 > thresholds.l_star, l_max, per_scale, scale, threshold: thresholds.l_star })
}

/// `f(x) = ½ + A sin(2πνx + φ0)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

pub const HOLDER_GRID: usize = 4096;
const HOLDER_MARGIN: f64 = 0.9;
const CURVE_ATTEMPTS: u64 = 16;

impl Curve {
    pub fn value(&self, x: f64) -> f64 {
        0.5 + self.amplitude * (std::f64::consts::TAU * self.frequency * x + self.phase).sin()
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let w = std::f64::consts::TAU * self.frequency;
        self.amplitude * w * (w * x + self.phase).cos()
    }

    pub fn max_slope(&self) -> f64 {
        self.amplitude.abs() * std::f64::consts::TAU * self.frequency
    }

    /// `max |f'(x) - f'(y)| / (αβ |x - y|^{α-1})` over pairs of an evenly
    /// spaced grid on `[0, 1]`.
    pub fn holder_ratio(&self, alpha: f64, beta: f64, grid: usize) -> f64 {
        let xs: Vec<f64> = (0..grid).map(|i| i as f64 / (grid - 1) as f64).collect();
        let ds: Vec<f64> = xs.iter().map(|&x| self.derivative(x)).collect();
        (0..grid)
            .into_par_iter()
            .map(|i| {
                let mut worst = 0.0f64;
                for k in i + 1..grid {
                    let r = (ds[i] - ds[k]).abs() / (alpha * beta * (xs[k] - xs[i]).powf(alpha - 1.0));
                    worst = worst.max(r);
                }
                worst
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Random sinusoid scaled into Hölder(`α`, `β`) with margin, slope at most
    /// `S`, and range inside `[0, 1]`.
    pub fn generate(alpha: f64, beta: f64, s: f64, key: u64) -> Result<Self> {
        for attempt in 0..CURVE_ATTEMPTS {
            let mut rng = CounterRng::new(derive(key, attempt));
            let raw = Curve {
                amplitude: 0.1 + 0.35 * rng.uniform(),
                frequency: 0.5 + 2.5 * rng.uniform(),
                phase: std::f64::consts::TAU * rng.uniform(),
            };
            let h = raw.holder_ratio(alpha, beta, HOLDER_GRID);
            let scale = 1f64.min(HOLDER_MARGIN / h).min(HOLDER_MARGIN * s / raw.max_slope());
            let curve = Curve { amplitude: raw.amplitude * scale, ..raw };
            if curve.holder_ratio(alpha, beta, HOLDER_GRID) <= 1.0 && curve.max_slope() <= s {
                return Ok(curve);
            }
        }
        Err(crate::Error::NonConvergence(format!("no curve passed the Hölder audit in {CURVE_ATTEMPTS} draws")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hypothesis {
    Null,
    Alternative,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub points: Vec<(f64, f64)>,
    pub curve: Option<Curve>,
}

/// `N` points: uniform on the square, or under the alternative a fraction
/// `eps` on the graph of a generated curve with `x` uniform. Point `i` always
/// consumes uniforms `3i, 3i+1, 3i+2` of the scene stream, so `eps = 0`
/// reproduces the null scene exactly.
pub fn sample_scene(n_points: usize, alpha: f64, beta: f64, s: f64, eps: f64, seed: u64, hypothesis: Hypothesis) -> Result<Scene> {
    ensure!((0.0..=1.0).contains(&eps), Precondition, "eps = {eps} must lie in [0, 1]");
    ensure!(alpha > 1.0 && alpha <= 2.0, Precondition, "alpha = {alpha} must lie in (1, 2]");
    let curve = match hypothesis {
        Hypothesis::Null => None,
        Hypothesis::Alternative => Some(Curve::generate(alpha, beta, s, derive(seed, domain::CURVE))?),
    };
    let key = derive(seed, domain::SCENE);
    let points = (0..n_points as u64)
        .map(|i| {
            let (u0, x, u2) = (uniform(key, 3 * i), uniform(key, 3 * i + 1), uniform(key, 3 * i + 2));
            match curve {
                Some(f) if u0 < eps => (x, f.value(x)),
                _ => (x, u2),
            }
        })
        .collect();
    Ok(Scene { points, curve })
}

/// `x,y`
pub fn points_to_csv(points: &[(f64, f64)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x", "y"])?;
    for (x, y) in points {
        w.write_record([x.to_string(), y.to_string()])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf8"))
}

pub fn points_from_csv(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in r.deserialize::<(f64, f64)>() {
        let (x, y) = rec?;
        ensure!((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y), Format, "point ({x}, {y}) is outside [0, 1]^2");
        out.push((x, y));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(n: usize, seed: u64) -> Vec<(f64, f64)> {
        sample_scene(n, 2.0, 1.0, 1.0, 0.0, seed, Hypothesis::Null).unwrap().points
    }

    #[test]
    fn geometry_matches_definitions() {
        let g = ScaleGeometry::new(4, 11, 1.0).unwrap();
        assert_eq!((g.n_k, g.n_l1, g.l2_max), (16, 256, 16));
        assert_eq!(g.len(), 16 * 256 * 33);
        assert!((g.omega * g.t - 2.0 / 2048.0).abs() < 1e-15);
        let g0 = ScaleGeometry::new(0, 11, 1.0).unwrap();
        assert_eq!(g0.len(), 4096 * 8193);
        for idx in [0, 17, 4000, g.len() - 1] {
            let (k, l1, l2) = g.unindex(idx);
            assert_eq!(g.index(k, l1, l2), idx);
        }
        assert!(ScaleGeometry::new(12, 11, 1.0).is_err());
    }

    #[test]
    fn edges_match_direct_rule() {
        let g = ScaleGeometry::new(2, 6, 1.0).unwrap();
        let col = g.column_len();
        for idx in (0..g.len()).step_by(7) {
            let (k, l1, l2) = g.unindex(idx);
            let direct: Vec<usize> = if k + 1 < g.n_k {
                ((k + 1) * col..(k + 2) * col)
                    .filter(|&t| {
                        let (_, a, b) = g.unindex(t);
                        (a as i64 - l1 as i64 - l2).abs() <= 4 && (b - l2).abs() <= 4
                    })
                    .collect()
            } else {
                Vec::new()
            };
            assert_eq!(g.successors(idx), direct);
        }
    }

    #[test]
    fn binned_counts_match_scan() {
        let points = cloud(1000, 5);
        for j in [1, 3, 5] {
            let graph = build_significance_graph(&points, j, 8, 1.0, 6).unwrap();
            let g = &graph.geometry;
            for idx in 0..g.len() {
                let (k, l1, l2) = g.unindex(idx);
                let r = g.region(k, l1, l2);
                let n = points.iter().filter(|&&(x, y)| r.contains(x, y)).count();
                assert_eq!(graph.counts[idx] as usize, n, "j={j} region {r:?}");
                assert_eq!(graph.is_significant(idx), n > 6);
            }
        }
    }

    #[test]
    fn counting_edge_cases() {
        let empty = build_significance_graph(&[], 3, 8, 1.0, 6).unwrap();
        assert_eq!(empty.significant_count(), 0);
        assert_eq!(empty.longest_significant_path(), 0);
        let g = ScaleGeometry::new(3, 8, 1.0).unwrap();
        let r = g.region(2, 40, 3);
        let points = vec![(r.center.0 + 0.01, r.center.1 + r.slope * 0.01); 50];
        let graph = build_significance_graph(&points, 3, 8, 1.0, 6).unwrap();
        assert_eq!(graph.counts[g.index(2, 40, 3)], 50);
    }

    #[test]
    fn path_on_full_and_empty_labels() {
        let g = ScaleGeometry::new(3, 7, 1.0).unwrap();
        let all = SignificanceGraph::from_counts(g.clone(), 0, vec![1; g.len()]).unwrap();
        assert_eq!(all.longest_significant_path(), 8);
        let none = SignificanceGraph::from_counts(g.clone(), 0, vec![0; g.len()]).unwrap();
        assert_eq!(none.longest_significant_path(), 0);
    }

    fn dfs(graph: &SignificanceGraph, idx: usize) -> usize {
        1 + graph.geometry.successors(idx).into_iter().filter(|&t| graph.is_significant(t)).map(|t| dfs(graph, t)).max().unwrap_or(0)
    }

    #[test]
    fn path_matches_exhaustive_search() {
        let g = ScaleGeometry::new(3, 6, 1.0).unwrap();
        for seed in 0..20u64 {
            let density = 0.04 + 0.003 * seed as f64;
            let counts: Vec<u16> = (0..g.len()).map(|i| (uniform(seed, i as u64) < density) as u16).collect();
            let graph = SignificanceGraph::from_counts(g.clone(), 0, counts).unwrap();
            let oracle = (0..g.len()).filter(|&i| graph.is_significant(i)).map(|i| dfs(&graph, i)).max().unwrap_or(0);
            assert_eq!(graph.longest_significant_path(), oracle, "seed {seed}");
        }
    }

    #[test]
    fn thresholds_follow_definitions() {
        let t = compute_thresholds(2048, Some(2.0), 1.0, 1.0, 0.1, 6, 1.2).unwrap();
        assert!((t.p0 - 0.0045338).abs() < 1e-6);
        assert_eq!((t.big_j, t.c_j), (11, 4));
        t.validate(1e-9).unwrap();
        // λ* is the first grid point past the inequality
        assert!(poisson_tail(t.lambda_star / LAMBDA_GRID_RATIO, 6) <= t.p_star);
        let unknown = compute_thresholds(2048, None, 1.0, 1.0, 0.1, 6, 1.2).unwrap();
        assert_eq!(unknown.c_j, 5);
        unknown.validate(1e-9).unwrap();
        assert!(compute_thresholds(2048, Some(2.0), 1.0, 1.0, 0.1, 5, 1.2).is_err());
        assert!(compute_thresholds(2048, Some(2.5), 1.0, 1.0, 0.1, 6, 1.2).is_err());
        let mut broken = t.clone();
        broken.l_star += 1e-3;
        assert!(broken.validate(1e-9).is_err());
    }

    #[test]
    fn curve_passes_audit() {
        for seed in 0..4u64 {
            let f = Curve::generate(1.5, 1.0, 1.0, seed).unwrap();
            assert!(f.holder_ratio(1.5, 1.0, HOLDER_GRID) <= 1.0);
            assert!(f.max_slope() <= 1.0);
            assert!((0..=100).all(|i| (0.0..=1.0).contains(&f.value(i as f64 / 100.0))));
        }
    }

    #[test]
    fn scenes() {
        let null = sample_scene(500, 2.0, 1.0, 1.0, 0.3, 7, Hypothesis::Null).unwrap();
        let zero = sample_scene(500, 2.0, 1.0, 1.0, 0.0, 7, Hypothesis::Alternative).unwrap();
        assert_eq!(null.points, zero.points);
        let full = sample_scene(500, 2.0, 1.0, 1.0, 1.0, 7, Hypothesis::Alternative).unwrap();
        let f = full.curve.unwrap();
        assert!(full.points.iter().all(|&(x, y)| y == f.value(x)));
        let text = points_to_csv(&full.points).unwrap();
        assert_eq!(points_from_csv(&text).unwrap(), full.points);
        assert!(points_from_csv("x,y\n0.5,1.5\n").is_err());
    }

    #[test]
    fn empty_cloud_is_accepted() {
        let t = compute_thresholds(2048, Some(2.0), 1.0, 1.0, 0.1, 6, 1.2).unwrap();
        let r = msra_test(&[], &t).unwrap();
        assert!(!r.decision);
        assert_eq!(r.l_max, 0);
        assert_eq!(r.per_scale.len(), t.c_j + 1);
    }
}
