//! Exact across probabilities for thin nets (`m ≤ 12`).
//!
//! The state after `k` columns is the set `S ⊆ {1..m}` of rows reachable from
//! column 1 by a significant run. With `D = N(S)` the rows within `C` of `S`,
//! the next state is `B ∩ D` for a fresh Bernoulli pattern `B`, so
//! `P(S → S') = p^{|S'|} q^{|D| - |S'|}` for `S' ⊆ D`. Aggregating by `D` and
//! splitting one row at a time gives an `O(m · 2^m)` transition that never
//! materialises the `2^m × 2^m` matrix.
//!
//! Two routes to the conditional across probability are provided:
//!
//! * [`RhoMethod::RatioLimit`]: `ρ = lim P_k / P_{k-1}`, the Perron root of
//!   the chain killed at `∅`.
//! * [`RhoMethod::Stationary`]: make the chain on nonempty states stochastic
//!   by dividing each row by its one-step survival probability, take its
//!   stationary law `π`, and average the one-step survival under `π`. This
//!   route reproduces [`REFERENCE_TABLE`].
//!
//! The two agree for `m = 1` and differ by a few `1e-3` otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::longest_run::longest_run_length;
use crate::net::{Net, NetConfig};
use crate::scalar::{is_probability, Real};

pub const MAX_ROWS: usize = 12;

/// Transition kernel of the reachable-row chain.
#[derive(Clone, Debug)]
struct Kernel<T> {
    m: usize,
    p: T,
    q: T,
    /// `dilation[S] = N(S)`
    dilation: Vec<u32>,
}

impl<T: Real> Kernel<T> {
    fn new(m: usize, c: usize, p: T) -> Self {
        let full: u32 = (1u32 << m) - 1;
        let dilation = (0..1u32 << m)
            .map(|s| {
                let mut d = s;
                for shift in 1..=c.min(m) {
                    d |= s << shift;
                    d |= s >> shift;
                }
                d & full
            })
            .collect();
        Self { m, p, q: T::one() - p, dilation }
    }

    fn states(&self) -> usize {
        1 << self.m
    }

    /// Law of the first column's significant set.
    fn first_column(&self) -> Vec<T> {
        (0..self.states() as u32)
            .map(|s| {
                let k = s.count_ones() as i32;
                self.p.powi(k) * self.q.powi(self.m as i32 - k)
            })
            .collect()
    }

    /// One column: `out[S'] = Σ_S mass[S] P(S → S')` over nonempty `S`.
    fn push(&self, mass: &[T], out: &mut Vec<T>) {
        out.clear();
        out.resize(self.states(), T::zero());
        for (s, &w) in mass.iter().enumerate().skip(1) {
            out[self.dilation[s] as usize] += w;
        }
        for i in 0..self.m {
            let bit = 1usize << i;
            for s in 0..self.states() {
                if s & bit == 0 {
                    let hi = out[s | bit];
                    out[s] += self.q * hi;
                    out[s | bit] = self.p * hi;
                }
            }
        }
    }

    /// `1 - q^{|N(S)|}`: probability that a nonempty state survives a column.
    fn survival(&self, s: usize) -> T {
        T::one() - self.q.powi(self.dilation[s].count_ones() as i32)
    }
}

/// Law of the reachable-row set after `step` columns.
///
/// Stored as the law conditioned on survival plus `log P_k`, so the across
/// probability can fall far below the float range without losing the
/// conditional shape.
#[derive(Clone, Debug)]
pub struct ColumnStateModel<T> {
    kernel: Kernel<T>,
    c: usize,
    conditioned: Vec<T>,
    log_across: T,
    step: usize,
    scratch: Vec<T>,
}

fn check_args<T: Real>(m: usize, c: usize, p: T) -> Result<()> {
    ensure!(m >= 1, InvalidConfig, "m must be positive");
    ensure!(m <= MAX_ROWS, TooLarge, "m = {m} exceeds the exact-state limit of {MAX_ROWS}");
    ensure!(c >= 1, InvalidConfig, "C must be positive");
    ensure!(is_probability(p), InvalidConfig, "p = {p} is not a probability");
    Ok(())
}

impl<T: Real> ColumnStateModel<T> {
    /// State law after the first column.
    pub fn new(m: usize, c: usize, p: T) -> Result<Self> {
        check_args(m, c, p)?;
        let kernel = Kernel::new(m, c, p);
        let mut conditioned = kernel.first_column();
        let across = T::one() - conditioned[0];
        conditioned[0] = T::zero();
        if across > T::zero() {
            conditioned.iter_mut().for_each(|x| *x /= across);
        }
        Ok(Self { kernel, c, conditioned, log_across: across.ln(), step: 1, scratch: Vec::new() })
    }

    pub fn m(&self) -> usize {
        self.kernel.m
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn p(&self) -> T {
        self.kernel.p
    }

    /// Number of columns absorbed so far.
    pub fn step(&self) -> usize {
        self.step
    }

    /// `P_k(m, p)` at the current step.
    pub fn across_prob(&self) -> T {
        self.log_across.exp()
    }

    pub fn log_across_prob(&self) -> T {
        self.log_across
    }

    /// Full state law (entries sum to one, `∅` included).
    pub fn dist(&self) -> Vec<T> {
        let across = self.across_prob();
        let mut d: Vec<T> = self.conditioned.iter().map(|&x| x * across).collect();
        d[0] = T::one() - across;
        d
    }

    /// Absorbs one more column; returns `P_{k+1} / P_k`.
    pub fn advance(&mut self) -> T {
        if self.log_across == T::neg_infinity() {
            self.step += 1;
            return T::zero();
        }
        self.kernel.push(&self.conditioned, &mut self.scratch);
        std::mem::swap(&mut self.conditioned, &mut self.scratch);
        let survive = T::one() - self.conditioned[0];
        self.conditioned[0] = T::zero();
        if survive > T::zero() {
            // survival mass is recomputed from the nonempty entries
            let s: T = self.conditioned.iter().copied().sum();
            self.conditioned.iter_mut().for_each(|x| *x /= s);
        }
        self.log_across += survive.ln();
        self.step += 1;
        survive
    }
}

/// `P_k(m, p)`: probability of an across run in an `m × k` net.
pub fn across_prob_exact<T: Real>(m: usize, c: usize, p: T, k: usize) -> Result<T> {
    ensure!(k >= 1, Precondition, "k must be at least 1");
    let mut model = ColumnStateModel::new(m, c, p)?;
    for _ in 1..k {
        model.advance();
    }
    Ok(model.across_prob())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoMethod {
    RatioLimit,
    Stationary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoEstimate<T> {
    pub m: usize,
    pub c: usize,
    pub p: T,
    pub rho: T,
    pub k_converged: usize,
    pub tol: T,
    pub method: RhoMethod,
}

pub const DEFAULT_RHO_TOL: f64 = 1e-7;
const RHO_STEP_CAP: usize = 200_000;

/// Conditional across probability `ρ(m, p)`.
///
/// Iterates until successive values differ by less than `tol`. `k_converged`
/// counts columns for the ratio route and power iterations (plus the first
/// column) for the stationary route.
pub fn rho_exact<T: Real>(m: usize, c: usize, p: T, tol: T, method: RhoMethod) -> Result<RhoEstimate<T>> {
    check_args(m, c, p)?;
    ensure!(tol > T::zero(), Precondition, "tolerance must be positive");
    let done = |rho, k| RhoEstimate { m, c, p, rho, k_converged: k, tol, method };
    if p == T::zero() {
        return Ok(done(T::zero(), 1));
    }
    if p == T::one() {
        return Ok(done(T::one(), 2));
    }
    match method {
        RhoMethod::RatioLimit => {
            let mut model = ColumnStateModel::new(m, c, p)?;
            let mut last = model.advance();
            while model.step() < RHO_STEP_CAP {
                let r = model.advance();
                if (r - last).abs() < tol {
                    return Ok(done(r, model.step()));
                }
                last = r;
            }
        }
        RhoMethod::Stationary => {
            let kernel = Kernel::new(m, c, p);
            let survival: Vec<T> = (0..kernel.states()).map(|s| kernel.survival(s)).collect();
            let mut pi = kernel.first_column();
            pi[0] = T::zero();
            let total: T = pi.iter().copied().sum();
            pi.iter_mut().for_each(|x| *x /= total);
            let mut weighted = vec![T::zero(); kernel.states()];
            let mut next = Vec::new();
            let mut last: Option<T> = None;
            for iter in 1..RHO_STEP_CAP {
                let rho: T = pi.iter().zip(&survival).skip(1).map(|(&a, &b)| a * b).sum();
                if let Some(prev) = last {
                    if (rho - prev).abs() < tol {
                        return Ok(done(rho, iter));
                    }
                }
                last = Some(rho);
                for s in 1..kernel.states() {
                    weighted[s] = pi[s] / survival[s];
                }
                kernel.push(&weighted, &mut next);
                next[0] = T::zero();
                let s: T = next.iter().copied().sum();
                next.iter_mut().for_each(|x| *x /= s);
                std::mem::swap(&mut pi, &mut next);
            }
        }
    }
    Err(crate::Error::NonConvergence(format!(
        "rho(m={m}, C={c}, p={p}) did not settle to {tol} within {RHO_STEP_CAP} steps"
    )))
}

/// Bounds on `P(|L0(m, n)| < k)`:
/// `((1 - P_k)^{n-k+1}, (1 - q^m P_k)^{n-k+1})`.
pub fn stab_bounds<T: Real>(m: usize, n: usize, c: usize, p: T, k: usize) -> Result<(T, T)> {
    ensure!(k >= 1 && k <= n, Precondition, "need 1 <= k <= n, got k={k}, n={n}");
    let pk = across_prob_exact(m, c, p, k)?;
    let reps = T::of((n - k + 1) as f64);
    let q = T::one() - p;
    let lower = (T::one() - pk).powf(reps);
    let upper = (T::one() - q.powi(m as i32) * pk).powf(reps);
    Ok((lower, upper))
}

pub const BRUTEFORCE_MAX_CELLS: usize = 22;

/// Exact pmf of `|L0(m, n)|` over lengths `0..=n`, by enumerating all
/// `2^{mn}` nets.
pub fn longest_run_dist_bruteforce<T: Real>(m: usize, n: usize, c: usize, p: T) -> Result<Vec<T>> {
    ensure!(m >= 1 && n >= 1, InvalidConfig, "m and n must be positive");
    ensure!(
        m * n <= BRUTEFORCE_MAX_CELLS,
        TooLarge,
        "m·n = {} exceeds {BRUTEFORCE_MAX_CELLS}",
        m * n
    );
    ensure!(is_probability(p), InvalidConfig, "p = {p} is not a probability");
    let cells = m * n;
    // counts[len][ones]
    let mut counts = vec![vec![0u64; cells + 1]; n + 1];
    let mut net = Net::zeros(&NetConfig::planar(m, n, c, 0.5, 0))?;
    for mask in 0u64..(1u64 << cells) {
        net.load_mask(mask);
        counts[longest_run_length(&net)][mask.count_ones() as usize] += 1;
    }
    let q = T::one() - p;
    Ok(counts
        .iter()
        .map(|by_ones| {
            by_ones
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(ones, &c)| T::of(c as f64) * p.powi(ones as i32) * q.powi((cells - ones) as i32))
                .sum()
        })
        .collect())
}

/// Reference conditional across probabilities for `C = 1`: rows `m = 4, 8,
/// 10`, columns `p = 0.1 .. 0.6`.
pub const REFERENCE_TABLE: [(usize, [f64; 6]); 3] = [
    (4, [0.2444, 0.4564, 0.6341, 0.7758, 0.8804, 0.9482]),
    (8, [0.2654, 0.4955, 0.6869, 0.8363, 0.9383, 0.9876]),
    (10, [0.2691, 0.5022, 0.6958, 0.8467, 0.9486, 0.9930]),
];
pub const REFERENCE_PS: [f64; 6] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub m: usize,
    pub p: f64,
    pub rho: f64,
    pub k_converged: usize,
}

/// `ρ` over a grid of `(m, p)` cells with `C = c`, cells evaluated in parallel.
pub fn rho_table(ms: &[usize], ps: &[f64], c: usize, tol: f64, method: RhoMethod) -> Result<Vec<TableRow>> {
    use rayon::prelude::*;
    let cells: Vec<(usize, f64)> = ms.iter().flat_map(|&m| ps.iter().map(move |&p| (m, p))).collect();
    cells
        .par_iter()
        .map(|&(m, p)| {
            rho_exact(m, c, p, tol, method).map(|r| TableRow { m, p, rho: r.rho, k_converged: r.k_converged })
        })
        .collect()
}

/// `m,p,rho,k_converged`
pub fn table_to_csv(rows: &[TableRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["m", "p", "rho", "k_converged"])?;
    for r in rows {
        w.write_record([r.m.to_string(), r.p.to_string(), format!("{:.10}", r.rho), r.k_converged.to_string()])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::generate_net;
    use crate::longest_run::replicate_seed;

    /// Dense transition matrix built pattern by pattern: the `4^m` loop.
    fn dense_kernel(m: usize, c: usize, p: f64) -> Vec<Vec<f64>> {
        let n = 1usize << m;
        let mut t = vec![vec![0.0; n]; n];
        for s in 0..n {
            for b in 0..n {
                let mut next = 0;
                for row in 0..m {
                    let reachable = (0..m).any(|r| (s >> r) & 1 == 1 && r.abs_diff(row) <= c);
                    if (b >> row) & 1 == 1 && reachable {
                        next |= 1 << row;
                    }
                }
                let k = (b as u32).count_ones() as i32;
                t[s][next] += p.powi(k) * (1.0 - p).powi(m as i32 - k);
            }
        }
        t
    }

    #[test]
    fn fast_kernel_matches_dense_kernel() {
        for &(m, c, p) in &[(3, 1, 0.3), (4, 2, 0.55), (5, 1, 0.8)] {
            let dense = dense_kernel(m, c, p);
            let kernel = Kernel::new(m, c, p);
            for s in 1..(1 << m) {
                let mut unit = vec![0.0; 1 << m];
                unit[s] = 1.0;
                let mut out = Vec::new();
                kernel.push(&unit, &mut out);
                for (a, b) in out.iter().zip(&dense[s]) {
                    assert!((a - b).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn single_row_is_geometric() {
        for &p in &[0.1, 0.37, 0.9] {
            for k in 1..8 {
                let pk: f64 = across_prob_exact(1, 1, p, k).unwrap();
                assert!((pk - p.powi(k as i32)).abs() < 1e-15);
            }
            for method in [RhoMethod::RatioLimit, RhoMethod::Stationary] {
                let r = rho_exact(1, 2, p, 1e-12, method).unwrap();
                assert!((r.rho - p).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn one_column_across() {
        for m in 1..6 {
            let pk: f64 = across_prob_exact(m, 1, 0.3, 1).unwrap();
            assert!((pk - (1.0 - 0.7f64.powi(m as i32))).abs() < 1e-15);
        }
    }

    #[test]
    fn recursion_matches_enumeration() {
        let pmf = longest_run_dist_bruteforce(3, 4, 1, 0.3f64).unwrap();
        let pk = across_prob_exact(3, 1, 0.3f64, 4).unwrap();
        assert!((pmf[4] - pk).abs() < 1e-14, "{} vs {}", pmf[4], pk);
        for m in 1..=3 {
            for k in 1..=5 {
                if m * k > 15 {
                    continue;
                }
                let pmf = longest_run_dist_bruteforce(m, k, 2, 0.45f64).unwrap();
                let pk = across_prob_exact(m, 2, 0.45f64, k).unwrap();
                assert!((pmf[k] - pk).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn dist_stays_normalised() {
        let mut model = ColumnStateModel::new(8, 1, 0.35f64).unwrap();
        for _ in 0..200 {
            let d = model.dist();
            let s: f64 = d.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(d.iter().all(|&x| x >= 0.0));
            assert!((d[1..].iter().sum::<f64>() - model.across_prob()).abs() < 1e-12);
            model.advance();
        }
    }

    #[test]
    fn log_mass_survives_underflow() {
        let mut model = ColumnStateModel::new(3, 1, 0.05f64).unwrap();
        for _ in 0..400 {
            model.advance();
        }
        assert_eq!(model.across_prob(), 0.0);
        assert!(model.log_across_prob().is_finite());
        let r = rho_exact(3, 1, 0.05f64, 1e-12, RhoMethod::RatioLimit).unwrap();
        let mut m2 = ColumnStateModel::new(3, 1, 0.05f64).unwrap();
        for _ in 0..399 {
            m2.advance();
        }
        let last = model.log_across_prob() - m2.log_across_prob();
        assert!((last.exp() - r.rho).abs() < 1e-10);
    }

    #[test]
    fn across_probability_is_monotone() {
        for &c in &[1, 2] {
            for m in 1..=6 {
                let mut prev_k = 1.0f64;
                for k in 1..=12 {
                    let pk = across_prob_exact(m, c, 0.4, k).unwrap();
                    assert!(pk <= prev_k);
                    prev_k = pk;
                    if m > 1 {
                        assert!(pk >= across_prob_exact(m - 1, c, 0.4, k).unwrap());
                    }
                    assert!(pk <= across_prob_exact(m, c, 0.45, k).unwrap());
                }
            }
        }
    }

    #[test]
    fn reference_cells() {
        let r = rho_exact(4, 1, 0.3f64, 1e-7, RhoMethod::Stationary).unwrap();
        assert!((r.rho - 0.6341).abs() <= 5e-4, "{}", r.rho);
        let r = rho_exact(10, 1, 0.6f64, 1e-7, RhoMethod::Stationary).unwrap();
        assert!((r.rho - 0.9930).abs() <= 5e-4, "{}", r.rho);
        // the ratio limit is a different number
        let r = rho_exact(4, 1, 0.3f64, 1e-9, RhoMethod::RatioLimit).unwrap();
        assert!((r.rho - 0.6377).abs() < 1e-4, "{}", r.rho);
    }

    #[test]
    fn single_precision_instantiation() {
        let r32 = rho_exact(4, 1, 0.3f32, 1e-6, RhoMethod::RatioLimit).unwrap();
        let r64 = rho_exact(4, 1, 0.3f64, 1e-9, RhoMethod::RatioLimit).unwrap();
        assert!((r32.rho as f64 - r64.rho).abs() < 1e-4);
        let b32 = stab_bounds(3, 5, 1, 0.3f32, 3).unwrap();
        let b64 = stab_bounds(3, 5, 1, 0.3f64, 3).unwrap();
        assert!((b32.0 as f64 - b64.0).abs() < 1e-5);
    }

    #[test]
    fn stab_bounds_edge_cases() {
        assert_eq!(stab_bounds(3, 6, 1, 1.0f64, 4).unwrap(), (0.0, 1.0));
        assert_eq!(stab_bounds(3, 6, 1, 0.0f64, 4).unwrap(), (1.0, 1.0));
        assert!(stab_bounds(3, 6, 1, 0.5f64, 7).is_err());
        assert!(stab_bounds(3, 6, 1, 0.5f64, 0).is_err());
    }

    #[test]
    fn stab_bounds_bracket_exact_probability() {
        let pmf = longest_run_dist_bruteforce(3, 5, 1, 0.3f64).unwrap();
        let below: f64 = pmf[..3].iter().sum();
        let (lo, hi) = stab_bounds(3, 5, 1, 0.3f64, 3).unwrap();
        assert!(lo <= below && below <= hi, "{lo} <= {below} <= {hi}");
    }

    #[test]
    fn bruteforce_pmf_basics() {
        let p = 0.3f64;
        let pmf = longest_run_dist_bruteforce(1, 2, 1, p).unwrap();
        assert!((pmf[2] - p * p).abs() < 1e-15);
        let pmf = longest_run_dist_bruteforce(4, 5, 2, 0.62f64).unwrap();
        assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(longest_run_dist_bruteforce(5, 5, 1, 0.5f64).is_err());
    }

    #[test]
    fn bruteforce_pmf_matches_monte_carlo() {
        let pmf = longest_run_dist_bruteforce(2, 3, 1, 0.5f64).unwrap();
        let reps = 1_000_000usize;
        let cfg = NetConfig::planar(2, 3, 1, 0.5, 99);
        let mut hist = [0u64; 4];
        for i in 0..reps {
            let net = generate_net(&cfg.with_seed(replicate_seed(99, i))).unwrap();
            hist[longest_run_length(&net)] += 1;
        }
        for (len, &count) in hist.iter().enumerate() {
            let est = count as f64 / reps as f64;
            let se = (pmf[len] * (1.0 - pmf[len]) / reps as f64).sqrt();
            assert!((est - pmf[len]).abs() <= 4.0 * se + 1e-12, "len {len}: {est} vs {}", pmf[len]);
        }
    }

    #[test]
    fn argument_checks() {
        assert!(ColumnStateModel::new(13, 1, 0.5f64).is_err());
        assert!(ColumnStateModel::new(0, 1, 0.5f64).is_err());
        assert!(ColumnStateModel::new(4, 1, 1.5f64).is_err());
        assert!(rho_exact(4, 1, 0.5f64, 0.0, RhoMethod::Stationary).is_err());
        assert!(across_prob_exact(4, 1, 0.5f64, 0).is_err());
    }

    #[test]
    fn degenerate_rho() {
        for method in [RhoMethod::RatioLimit, RhoMethod::Stationary] {
            assert_eq!(rho_exact(5, 1, 0.0f64, 1e-9, method).unwrap().rho, 0.0);
            assert_eq!(rho_exact(5, 1, 1.0f64, 1e-9, method).unwrap().rho, 1.0);
        }
    }

    #[test]
    fn table_csv_header() {
        let rows = rho_table(&[4], &[0.1, 0.2], 1, 1e-7, RhoMethod::Stationary).unwrap();
        let csv = table_to_csv(&rows).unwrap();
        assert!(csv.starts_with("m,p,rho,k_converged\n4,0.1,0.2444"));
        assert_eq!(csv.lines().count(), 3);
    }
}
