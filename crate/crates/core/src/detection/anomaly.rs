//! Detecting a planted anomalous chain in a planar Bernoulli net.
//!
//! Under `H0` every node is Bernoulli(`p0`). Under `H1` the nodes of a chain
//! `L` are Bernoulli(`p1`). The test rejects when `|L0| > log(nm) / φ(p0)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::longest_run::longest_run_length;
use crate::net::{node_uniform, Net, NetConfig, NodeCoord};
use crate::rng::{derive, domain, CounterRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainSpec {
    /// A fixed chain of 1-based coordinates.
    Explicit(Vec<NodeCoord>),
    /// A fresh random chain per replicate: uniform start row in column 1,
    /// steps uniform in `[-C, C]` clamped to the net, `length` columns.
    RandomMonotone { length: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnomalyScenario {
    /// Planar net with `p = p0`.
    pub base: NetConfig,
    pub p1: f64,
    pub chain: ChainSpec,
}

impl AnomalyScenario {
    pub fn across(m: usize, n: usize, c: usize, p0: f64, p1: f64, seed: u64) -> Self {
        Self { base: NetConfig::planar(m, n, c, p0, seed), p1, chain: ChainSpec::RandomMonotone { length: n } }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        ensure!(self.base.is_planar(), InvalidConfig, "anomaly scenarios use planar nets");
        ensure!(self.p1 <= 1.0 && self.p1 >= self.base.p, InvalidConfig, "need p0 <= p1 <= 1");
        match &self.chain {
            ChainSpec::Explicit(chain) => {
                ensure!(!chain.is_empty(), InvalidConfig, "empty chain");
                ensure!(chain.iter().all(|c| c.in_bounds(&self.base)), OutOfBounds, "chain leaves the net");
                ensure!(
                    chain.windows(2).all(|w| w[0].connects_to(&w[1], &self.base)),
                    InvalidConfig,
                    "chain nodes are not connected"
                );
            }
            ChainSpec::RandomMonotone { length } => {
                ensure!(*length >= 1 && *length <= self.base.n, InvalidConfig, "chain length must lie in [1, n]");
            }
        }
        Ok(())
    }

    pub fn chain_len(&self) -> usize {
        match &self.chain {
            ChainSpec::Explicit(c) => c.len(),
            ChainSpec::RandomMonotone { length } => *length,
        }
    }

    /// The chain used by the replicate with key `key`.
    pub fn realize_chain(&self, key: u64) -> Vec<NodeCoord> {
        match &self.chain {
            ChainSpec::Explicit(c) => c.clone(),
            ChainSpec::RandomMonotone { length } => {
                let (m, c) = (self.base.row_dims[0].m as i64, self.base.row_dims[0].c as i64);
                let mut rng = CounterRng::new(derive(key, domain::CHAIN));
                let mut row = rng.below(m as u64) as i64 + 1;
                let mut chain = vec![NodeCoord::planar(1, row as usize)];
                for col in 2..=*length {
                    let step = rng.below(2 * c as u64 + 1) as i64 - c;
                    row = (row + step).clamp(1, m);
                    chain.push(NodeCoord::planar(col, row as usize));
                }
                chain
            }
        }
    }

    /// One net. Under `H1` the chain nodes reuse their uniforms against `p1`,
    /// so the `H1` net dominates the `H0` net drawn from the same key.
    pub fn sample(&self, key: u64, alternative: bool) -> Result<Net> {
        let config = self.base.with_seed(key);
        let mut net = crate::net::generate_net(&config)?;
        if alternative {
            let node_key = config.node_key();
            let rows = config.rows();
            for x in self.realize_chain(key) {
                let (col, r) = (x.col - 1, x.rows[0] - 1);
                net.set(col, r, node_uniform(node_key, rows, col, r) < self.p1);
            }
        }
        Ok(net)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnomalyReport {
    pub type1_rate: f64,
    pub type2_rate: f64,
    /// `log(nm) / φ(p0)`
    pub threshold: f64,
    /// `log_{1/p1} |L| > log(nm) / φ(p0)`
    pub separation_holds: bool,
    pub replicates: usize,
    pub mean_length_h0: f64,
    pub mean_length_h1: f64,
}

pub fn anomaly_threshold(m: usize, n: usize, phi_p0: f64) -> f64 {
    ((m * n) as f64).ln() / phi_p0
}

/// Error rates of the longest-run test over independent `H0` and `H1`
/// replicates.
pub fn plant_and_test_anomaly(scenario: &AnomalyScenario, phi_p0: f64, replicates: usize, seed: u64) -> Result<AnomalyReport> {
    scenario.validate()?;
    ensure!(phi_p0 > 0.0, Precondition, "phi(p0) must be positive; p0 is not subcritical");
    ensure!(replicates >= 1, Precondition, "replicates must be positive");
    let (m, n) = (scenario.base.row_dims[0].m, scenario.base.n);
    let threshold = anomaly_threshold(m, n, phi_p0);
    let run = |alternative: bool| -> Result<Vec<usize>> {
        let root = derive(derive(seed, domain::REPLICATE), alternative as u64);
        (0..replicates)
            .into_par_iter()
            .map(|i| scenario.sample(derive(root, i as u64), alternative).map(|net| longest_run_length(&net)))
            .collect()
    };
    let (h0, h1) = (run(false)?, run(true)?);
    let rejects = |v: &[usize]| v.iter().filter(|&&l| l as f64 > threshold).count() as f64 / replicates as f64;
    let mean = |v: &[usize]| v.iter().sum::<usize>() as f64 / replicates as f64;
    let separation_holds = if scenario.p1 >= 1.0 {
        true
    } else {
        (scenario.chain_len() as f64).ln() / -scenario.p1.ln() > threshold
    };
    Ok(AnomalyReport {
        type1_rate: rejects(&h0),
        type2_rate: 1.0 - rejects(&h1),
        threshold,
        separation_holds,
        replicates,
        mean_length_h0: mean(&h0),
        mean_length_h1: mean(&h1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_chain_is_connected() {
        let s = AnomalyScenario::across(9, 40, 2, 0.1, 0.9, 1);
        for key in 0..50 {
            let chain = s.realize_chain(key);
            assert_eq!(chain.len(), 40);
            let explicit = AnomalyScenario { chain: ChainSpec::Explicit(chain), ..s.clone() };
            explicit.validate().unwrap();
        }
    }

    #[test]
    fn alternative_dominates_null() {
        let s = AnomalyScenario::across(20, 30, 1, 0.2, 0.7, 3);
        for key in 0..20 {
            let (a, b) = (s.sample(key, false).unwrap(), s.sample(key, true).unwrap());
            for col in 0..30 {
                for r in 0..20 {
                    assert!(!a.get(col, r) || b.get(col, r));
                }
            }
        }
    }

    #[test]
    fn sure_chain_is_always_found() {
        let s = AnomalyScenario::across(64, 200, 1, 0.2, 1.0, 5);
        let r = plant_and_test_anomaly(&s, 0.6, 20, 5).unwrap();
        assert_eq!(r.type2_rate, 0.0);
        assert!(r.separation_holds);
        assert!(r.mean_length_h1 >= 200.0);
    }

    #[test]
    fn null_equivalence() {
        let s = AnomalyScenario::across(64, 64, 1, 0.25, 0.25, 9);
        let r = plant_and_test_anomaly(&s, 0.5, 400, 9).unwrap();
        // threshold ~ 16.6 sits inside the H0 length distribution
        let (a, b) = (r.type1_rate, 1.0 - r.type2_rate);
        let se = (a * (1.0 - a) / 400.0 + b * (1.0 - b) / 400.0).sqrt();
        assert!((a - b).abs() <= 4.0 * se.max(1.0 / 400.0), "{r:?}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = AnomalyScenario::across(8, 8, 1, 0.3, 0.2, 1);
        assert!(plant_and_test_anomaly(&s, 0.5, 10, 1).is_err());
        let s = AnomalyScenario::across(8, 8, 1, 0.2, 0.3, 1);
        assert!(plant_and_test_anomaly(&s, 0.0, 10, 1).is_err());
        let broken = AnomalyScenario {
            chain: ChainSpec::Explicit(vec![NodeCoord::planar(1, 1), NodeCoord::planar(2, 5)]),
            ..s
        };
        assert!(broken.validate().is_err());
    }
}
