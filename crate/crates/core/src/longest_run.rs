//! Longest significant run `|L0|` by column dynamic programming.
//!
//! `Y(i, 1) = z(i, 1)` and `Y(i, j) = z(i, j) · (1 + max Y(i', j - 1))` over the
//! connectivity box of `i`; the answer is the largest `Y`. Cost is
//! `O(n · rows · Σ C_k)` with one column of state when only the length is
//! needed.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::net::{generate_net, Net, NetConfig, NodeCoord};
use crate::rng::{self, domain};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunResult {
    pub length: usize,
    pub path: Vec<NodeCoord>,
}

impl RunResult {
    /// Structural audit: connected, significant, and `length` nodes long.
    pub fn is_valid_for(&self, net: &Net) -> bool {
        self.path.len() == self.length
            && self.path.iter().all(|x| x.in_bounds(net.config()) && net.is_significant(x))
            && self.path.windows(2).all(|w| w[0].connects_to(&w[1], net.config()))
    }
}

/// Length of the longest significant run, keeping a single column of DP state.
pub fn longest_run_length(net: &Net) -> usize {
    let t = net.config().transverse();
    let rows = net.rows();
    let mut prev = vec![0u32; rows];
    let mut reach = Vec::with_capacity(rows);
    let mut scratch = Vec::with_capacity(rows);
    let mut best = 0u32;
    for col in 0..net.n() {
        if col > 0 {
            t.box_max(&prev, &mut reach, &mut scratch);
        }
        let words = net.column_words(col);
        for r in 0..rows {
            let open = (words[r / 64] >> (r % 64)) & 1 == 1;
            prev[r] = if !open {
                0
            } else if col == 0 {
                1
            } else {
                reach[r] + 1
            };
        }
        best = best.max(prev.iter().copied().max().unwrap_or(0));
    }
    best as usize
}

/// Longest significant run with one witness path.
///
/// The path ends at the first maximal node in column-major order. Among tied
/// predecessors the smallest transverse index wins.
pub fn longest_run_dp(net: &Net) -> RunResult {
    let t = net.config().transverse();
    let rows = net.rows();
    let n = net.n();
    let mut table = vec![0u32; rows * n];
    let mut reach = Vec::with_capacity(rows);
    let mut scratch = Vec::with_capacity(rows);
    for col in 0..n {
        if col > 0 {
            t.box_max(&table[(col - 1) * rows..col * rows], &mut reach, &mut scratch);
        }
        for r in 0..rows {
            table[col * rows + r] = match (net.get(col, r), col) {
                (false, _) => 0,
                (true, 0) => 1,
                (true, _) => reach[r] + 1,
            };
        }
    }
    let Some((end, &length)) = table.iter().enumerate().rev().max_by_key(|(_, &y)| y) else {
        return RunResult { length: 0, path: Vec::new() };
    };
    if length == 0 {
        return RunResult { length: 0, path: Vec::new() };
    }
    // `rev().max_by_key` returns the last maximum of the reversed order, i.e.
    // the first in column-major order.
    let (mut col, mut r) = (end / rows, end % rows);
    let mut path = vec![NodeCoord::from_internal(col, r, &t)];
    let mut window = Vec::new();
    while table[col * rows + r] > 1 {
        let want = table[col * rows + r] - 1;
        t.box_around(r, &mut window);
        r = *window
            .iter()
            .find(|&&r2| table[(col - 1) * rows + r2] == want)
            .expect("DP value has a predecessor");
        col -= 1;
        path.push(NodeCoord::from_internal(col, r, &t));
    }
    path.reverse();
    RunResult { length: length as usize, path }
}

/// Node budget of [`longest_run_bruteforce`].
pub const BRUTEFORCE_MAX_NODES: usize = 64;

/// Exhaustive depth-first enumeration of every significant chain.
pub fn longest_run_bruteforce(net: &Net) -> Result<usize> {
    let cfg = net.config();
    ensure!(
        cfg.node_count() <= BRUTEFORCE_MAX_NODES,
        TooLarge,
        "{} nodes exceed the brute-force budget of {BRUTEFORCE_MAX_NODES}",
        cfg.node_count()
    );
    let t = cfg.transverse();
    // adjacency lists, independent of the DP's box maximum
    let boxes: Vec<Vec<usize>> = (0..net.rows())
        .map(|r| {
            let mut v = Vec::new();
            t.box_around(r, &mut v);
            v
        })
        .collect();

    fn deepest(net: &Net, boxes: &[Vec<usize>], col: usize, r: usize) -> usize {
        if col + 1 == net.n() {
            return 1;
        }
        1 + boxes[r]
            .iter()
            .filter(|&&r2| net.get(col + 1, r2))
            .map(|&r2| deepest(net, boxes, col + 1, r2))
            .max()
            .unwrap_or(0)
    }

    let mut best = 0;
    for col in 0..net.n() {
        for r in 0..net.rows() {
            if net.get(col, r) {
                best = best.max(deepest(net, &boxes, col, r));
            }
        }
    }
    Ok(best)
}

/// Histogram of `|L0|` over independent replicates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthHistogram {
    pub config: NetConfig,
    pub replicates: usize,
    pub counts: BTreeMap<usize, u64>,
}

impl LengthHistogram {
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    /// Lower median of the sampled lengths.
    pub fn median(&self) -> usize {
        let half = self.total().div_ceil(2);
        let mut seen = 0;
        for (&len, &c) in &self.counts {
            seen += c;
            if seen >= half {
                return len;
            }
        }
        0
    }

    pub fn mean(&self) -> f64 {
        let s: f64 = self.counts.iter().map(|(&l, &c)| l as f64 * c as f64).sum();
        s / self.total() as f64
    }

    /// `length,count`, ascending, observed lengths only.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["length", "count"])?;
        for (len, c) in &self.counts {
            w.write_record([len.to_string(), c.to_string()])?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf8"))
    }
}

/// Seed of replicate `i` under `seed`.
pub fn replicate_seed(seed: u64, i: usize) -> u64 {
    rng::derive(rng::derive(seed, domain::REPLICATE), i as u64)
}

/// `|L0|` of each replicate, in replicate order.
pub fn replicate_lengths(config: &NetConfig, replicates: usize) -> Result<Vec<usize>> {
    config.validate()?;
    ensure!(replicates >= 1, Precondition, "replicates must be positive");
    (0..replicates)
        .into_par_iter()
        .map(|i| generate_net(&config.with_seed(replicate_seed(config.seed, i))).map(|net| longest_run_length(&net)))
        .collect()
}

/// Histogram of `longest_run_length` over `replicates` seeded nets.
pub fn length_distribution(config: &NetConfig, replicates: usize) -> Result<LengthHistogram> {
    let lengths = replicate_lengths(config, replicates)?;
    let mut counts = BTreeMap::new();
    for len in lengths {
        *counts.entry(len).or_insert(0) += 1;
    }
    Ok(LengthHistogram { config: config.clone(), replicates, counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::RowDim;
    use proptest::prelude::*;

    #[test]
    fn trivial_nets() {
        let cfg = NetConfig::planar(4, 6, 1, 0.0, 0);
        let zero = generate_net(&cfg).unwrap();
        let r = longest_run_dp(&zero);
        assert_eq!(r.length, 0);
        assert!(r.path.is_empty());
        let full = generate_net(&cfg.with_p(1.0)).unwrap();
        let r = longest_run_dp(&full);
        assert_eq!(r.length, 6);
        assert!(r.is_valid_for(&full));
        // lexicographic tie-break: the path hugs row 1
        assert!(r.path.iter().all(|x| x.rows == vec![1]));
    }

    #[test]
    fn bruteforce_edge_cases() {
        let cfg = NetConfig::planar(3, 3, 1, 0.0, 0);
        let mut net = Net::zeros(&cfg).unwrap();
        assert_eq!(longest_run_bruteforce(&net).unwrap(), 0);
        net.set(1, 2, true);
        assert_eq!(longest_run_bruteforce(&net).unwrap(), 1);
        assert_eq!(longest_run_dp(&net).length, 1);
        let big = Net::zeros(&NetConfig::planar(9, 8, 1, 0.0, 0)).unwrap();
        assert!(longest_run_bruteforce(&big).is_err());
    }

    #[test]
    fn seeded_four_by_four_matches_dfs() {
        let net = generate_net(&NetConfig::planar(4, 4, 1, 0.5, 20240611)).unwrap();
        let dp = longest_run_dp(&net);
        assert_eq!(dp.length, longest_run_bruteforce(&net).unwrap());
        assert!(dp.is_valid_for(&net));
    }

    #[test]
    fn hand_built_zigzag() {
        // rows top to bottom, columns left to right
        // 1 0 0 1
        // 0 1 0 1
        // 0 0 1 0
        let cfg = NetConfig::planar(3, 4, 1, 0.5, 0);
        let mut net = Net::zeros(&cfg).unwrap();
        for (c, r) in [(0, 0), (1, 1), (2, 2), (3, 1), (3, 0)] {
            net.set(c, r, true);
        }
        let run = longest_run_dp(&net);
        assert_eq!(run.length, 4);
        let rows: Vec<usize> = run.path.iter().map(|x| x.rows[0]).collect();
        assert_eq!(rows, vec![1, 2, 3, 2]);
        assert_eq!(longest_run_length(&net), 4);
    }

    #[test]
    fn six_by_six_self_consistency_sweep() {
        for i in 0..200u64 {
            let c = 1 + (i % 2) as usize;
            let net = generate_net(&NetConfig::planar(6, 6, c, 0.45, 1000 + i)).unwrap();
            assert_eq!(longest_run_dp(&net).length, longest_run_bruteforce(&net).unwrap(), "seed {}", 1000 + i);
        }
    }

    #[test]
    fn degenerate_histograms() {
        let h = length_distribution(&NetConfig::planar(5, 7, 1, 0.0, 1), 20).unwrap();
        assert_eq!(h.counts.get(&0), Some(&20));
        let h = length_distribution(&NetConfig::planar(5, 7, 1, 1.0, 1), 20).unwrap();
        assert_eq!(h.counts.get(&7), Some(&20));
        assert!(h.to_csv().unwrap().starts_with("length,count\n7,20"));
        assert!(length_distribution(&NetConfig::planar(5, 7, 1, 0.5, 1), 0).is_err());
    }

    #[test]
    fn histogram_replays_from_seed() {
        let cfg = NetConfig::planar(32, 32, 1, 0.3, 5);
        let a = length_distribution(&cfg, 50).unwrap();
        let b = length_distribution(&cfg, 50).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.total(), 50);
        assert!(a.counts.keys().all(|&l| l <= 32));
        // a prefix of replicates is a sub-sample of the longer run
        let first = replicate_lengths(&cfg, 10).unwrap();
        assert_eq!(first[..], replicate_lengths(&cfg, 50).unwrap()[..10]);
    }

    fn arb_small_net() -> impl Strategy<Value = Net> {
        (1usize..=6, 1usize..=6, 1usize..=2, 0.0f64..1.0, any::<u64>()).prop_map(|(m, n, c, p, seed)| {
            generate_net(&NetConfig::planar(m, n, c, p, seed)).unwrap()
        })
    }

    proptest! {
        #[test]
        fn dp_matches_oracle_and_path_is_valid(net in arb_small_net()) {
            let run = longest_run_dp(&net);
            prop_assert_eq!(run.length, longest_run_bruteforce(&net).unwrap());
            prop_assert_eq!(run.length, longest_run_length(&net));
            prop_assert!(run.is_valid_for(&net));
            prop_assert!(run.length <= net.n());
        }

        #[test]
        fn three_dimensional_dp_matches_oracle(n in 1usize..=4, m1 in 1usize..=4, m2 in 1usize..=4, p in 0.2f64..0.9, seed in any::<u64>()) {
            let cfg = NetConfig { n, row_dims: vec![RowDim { m: m1, c: 1 }, RowDim { m: m2, c: 1 }], p, seed };
            let net = generate_net(&cfg).unwrap();
            let run = longest_run_dp(&net);
            prop_assert_eq!(run.length, longest_run_bruteforce(&net).unwrap());
            prop_assert!(run.is_valid_for(&net));
        }

        #[test]
        fn opening_a_node_never_shortens_the_run(net in arb_small_net(), col in 0usize..6, row in 0usize..6) {
            let mut raised = net.clone();
            let (col, row) = (col % net.n(), row % net.rows());
            raised.set(col, row, true);
            prop_assert!(longest_run_length(&raised) >= longest_run_length(&net));
        }
    }
}
