//! Longest significant runs in Bernoulli nets and pseudo-tree lattices.
//!
//! The crate is organised bottom-up:
//!
//! * [`net`] – lattice configuration, counter-based random nets, connectivity.
//! * [`longest_run`] – the column dynamic program for `|L0|`, a brute-force
//!   oracle and replicate histograms.
//! * [`pseudo_tree`] – origin-rooted survival probabilities `θ_k(p)`, decay
//!   rate fits and critical-probability brackets.
//! * [`markov_exact`] – exact across probabilities and the conditional across
//!   probability `ρ(m, p)` from the column-state recursion.
//! * [`asymptotics`] – Poisson approximation, growth regions, rate ladders and
//!   Gumbel-type fits.
//! * [`detection`] – anomalous-run, multiscale filament and target-tracking tests.
//!
//! Exact computations are generic over [`Real`] (`f32` or `f64`); Monte Carlo
//! estimators report `f64`. The aliases below pin the common instantiations.

pub mod asymptotics;
pub mod detection;
pub mod error;
pub mod longest_run;
pub mod markov_exact;
pub mod net;
pub mod pseudo_tree;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type ColumnStateModel64 = markov_exact::ColumnStateModel<f64>;
pub type ColumnStateModel32 = markov_exact::ColumnStateModel<f32>;
pub type RhoEstimate64 = markov_exact::RhoEstimate<f64>;
pub type RhoEstimate32 = markov_exact::RhoEstimate<f32>;
pub type InflatingRegion64 = asymptotics::InflatingRegion<f64>;
pub type InflatingRegion32 = asymptotics::InflatingRegion<f32>;
