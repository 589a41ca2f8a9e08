//! Bernoulli nets: configuration, seeded generation and the oriented
//! connectivity relation.
//!
//! A net has `n` columns. Each column is a box of transverse nodes with
//! extents `m_1 × … × m_d`; node `(i, j)` connects to `(i + 1, j + s)` whenever
//! `|s_k| ≤ C_k` on every transverse axis. The planar net is `d = 1`.
//!
//! Coordinates are 1-based in [`NodeCoord`] and in every serialized format.
//! Internally columns and transverse indices are 0-based, and a transverse
//! position is flattened with the first axis varying slowest.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::rng::{self, domain};

/// Extent and connectivity of one transverse axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct RowDim {
    pub m: usize,
    pub c: usize,
}

impl From<(usize, usize)> for RowDim {
    fn from((m, c): (usize, usize)) -> Self {
        Self { m, c }
    }
}

impl From<RowDim> for (usize, usize) {
    fn from(d: RowDim) -> Self {
        (d.m, d.c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub n: usize,
    pub row_dims: Vec<RowDim>,
    pub p: f64,
    pub seed: u64,
}

impl NetConfig {
    /// The `m × n` planar net with connectivity `c`.
    pub fn planar(m: usize, n: usize, c: usize, p: f64, seed: u64) -> Self {
        Self { n, row_dims: vec![RowDim { m, c }], p, seed }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.n >= 1, InvalidConfig, "column count must be positive");
        ensure!(!self.row_dims.is_empty(), InvalidConfig, "row_dims must be nonempty");
        for (k, d) in self.row_dims.iter().enumerate() {
            ensure!(d.m >= 1, InvalidConfig, "row extent m_{} must be positive", k + 1);
            ensure!(d.c >= 1, InvalidConfig, "connectivity C_{} must be positive", k + 1);
        }
        ensure!(
            (0.0..=1.0).contains(&self.p),
            InvalidConfig,
            "p = {} is not a probability",
            self.p
        );
        self.rows()
            .checked_mul(self.n)
            .ok_or_else(|| Error::InvalidConfig("node count overflows".into()))?;
        Ok(())
    }

    /// Transverse node count `∏ m_k`.
    pub fn rows(&self) -> usize {
        self.row_dims.iter().map(|d| d.m).product()
    }

    pub fn node_count(&self) -> usize {
        self.rows() * self.n
    }

    pub fn is_planar(&self) -> bool {
        self.row_dims.len() == 1
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn with_p(&self, p: f64) -> Self {
        Self { p, ..self.clone() }
    }

    pub fn transverse(&self) -> Transverse {
        Transverse::new(
            self.row_dims.iter().map(|d| d.m).collect(),
            self.row_dims.iter().map(|d| d.c).collect(),
        )
    }

    /// Key of the per-node uniform field of this configuration.
    pub fn node_key(&self) -> u64 {
        rng::derive(self.seed, domain::NET)
    }
}

/// Shape of one column: extents, connectivity radii and flattening strides.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transverse {
    dims: Vec<usize>,
    reach: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
}

impl Transverse {
    pub fn new(dims: Vec<usize>, reach: Vec<usize>) -> Self {
        assert_eq!(dims.len(), reach.len());
        let mut strides = vec![1; dims.len()];
        for k in (0..dims.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * dims[k + 1];
        }
        let len = dims.iter().product();
        Self { dims, reach, strides, len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn reach(&self) -> &[usize] {
        &self.reach
    }

    /// Flattens 0-based transverse coordinates.
    pub fn linear(&self, rows: &[usize]) -> usize {
        rows.iter().zip(&self.strides).map(|(r, s)| r * s).sum()
    }

    /// Inverse of [`Transverse::linear`].
    pub fn coords(&self, mut r: usize) -> Vec<usize> {
        self.strides
            .iter()
            .map(|s| {
                let x = r / s;
                r %= s;
                x
            })
            .collect()
    }

    /// Flattened positions within the connectivity box around `r`, clamped to
    /// the column, in ascending order.
    pub fn box_around(&self, r: usize, out: &mut Vec<usize>) {
        out.clear();
        let center = self.coords(r);
        let lo: Vec<usize> = center.iter().zip(&self.reach).map(|(&x, &c)| x.saturating_sub(c)).collect();
        let hi: Vec<usize> = center
            .iter()
            .zip(&self.reach)
            .zip(&self.dims)
            .map(|((&x, &c), &m)| (x + c).min(m - 1))
            .collect();
        let mut cur = lo.clone();
        loop {
            out.push(self.linear(&cur));
            // odometer, last axis fastest
            let mut k = cur.len();
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                if cur[k] < hi[k] {
                    cur[k] += 1;
                    break;
                }
                cur[k] = lo[k];
            }
        }
    }

    /// `dst[r] = max(src[r'])` over the connectivity box around `r`.
    ///
    /// The box is a product of intervals, so the maximum is taken one axis at a
    /// time.
    pub fn box_max(&self, src: &[u32], dst: &mut Vec<u32>, scratch: &mut Vec<u32>) {
        dst.clear();
        dst.extend_from_slice(src);
        for axis in 0..self.dims.len() {
            std::mem::swap(dst, scratch);
            dst.clear();
            dst.resize(self.len, 0);
            let m = self.dims[axis];
            let c = self.reach[axis];
            let stride = self.strides[axis];
            let block = stride * m;
            for base in (0..self.len).step_by(block) {
                for inner in 0..stride {
                    let line = base + inner;
                    for x in 0..m {
                        let lo = x.saturating_sub(c);
                        let hi = (x + c).min(m - 1);
                        let mut best = 0;
                        for y in lo..=hi {
                            best = best.max(scratch[line + y * stride]);
                        }
                        dst[line + x * stride] = best;
                    }
                }
            }
        }
    }
}

/// 1-based node position.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeCoord {
    pub col: usize,
    pub rows: Vec<usize>,
}

impl NodeCoord {
    pub fn planar(col: usize, row: usize) -> Self {
        Self { col, rows: vec![row] }
    }

    pub fn in_bounds(&self, config: &NetConfig) -> bool {
        self.col >= 1
            && self.col <= config.n
            && self.rows.len() == config.row_dims.len()
            && self.rows.iter().zip(&config.row_dims).all(|(&r, d)| r >= 1 && r <= d.m)
    }

    /// 0-based column and flattened transverse index.
    pub fn to_internal(&self, t: &Transverse) -> (usize, usize) {
        let rows0: Vec<usize> = self.rows.iter().map(|r| r - 1).collect();
        (self.col - 1, t.linear(&rows0))
    }

    pub fn from_internal(col0: usize, r: usize, t: &Transverse) -> Self {
        Self { col: col0 + 1, rows: t.coords(r).into_iter().map(|x| x + 1).collect() }
    }

    /// Oriented connectivity between consecutive chain nodes.
    pub fn connects_to(&self, next: &NodeCoord, config: &NetConfig) -> bool {
        next.col == self.col + 1
            && self
                .rows
                .iter()
                .zip(&next.rows)
                .zip(&config.row_dims)
                .all(|((&a, &b), d)| a.abs_diff(b) <= d.c)
    }
}

/// A realized net: one bit per node, bit-packed column by column.
#[derive(Clone, Debug, PartialEq)]
pub struct Net {
    config: NetConfig,
    rows: usize,
    words_per_col: usize,
    bits: Vec<u64>,
}

impl Net {
    /// All-insignificant net of the given shape.
    pub fn zeros(config: &NetConfig) -> Result<Self> {
        config.validate()?;
        let rows = config.rows();
        let words_per_col = rows.div_ceil(64);
        Ok(Self { config: config.clone(), rows, words_per_col, bits: vec![0; words_per_col * config.n] })
    }

    /// Builds a net from a predicate on `(column, flattened row)`, both 0-based.
    pub fn from_fn(config: &NetConfig, f: impl Fn(usize, usize) -> bool + Sync) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        let rows = net.rows;
        let wpc = net.words_per_col;
        net.bits.par_chunks_mut(wpc).enumerate().for_each(|(col, words)| {
            for (w, word) in words.iter_mut().enumerate() {
                let start = w * 64;
                let end = (start + 64).min(rows);
                let mut acc = 0u64;
                for r in start..end {
                    if f(col, r) {
                        acc |= 1 << (r - start);
                    }
                }
                *word = acc;
            }
        });
        Ok(net)
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn n(&self) -> usize {
        self.config.n
    }

    /// Transverse node count per column.
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn get(&self, col: usize, r: usize) -> bool {
        let w = self.bits[col * self.words_per_col + r / 64];
        (w >> (r % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, col: usize, r: usize, value: bool) {
        let w = &mut self.bits[col * self.words_per_col + r / 64];
        if value {
            *w |= 1 << (r % 64);
        } else {
            *w &= !(1 << (r % 64));
        }
    }

    pub fn is_significant(&self, coord: &NodeCoord) -> bool {
        let (c, r) = coord.to_internal(&self.config.transverse());
        self.get(c, r)
    }

    /// Packed words of one column (bit `r % 64` of word `r / 64`).
    pub fn column_words(&self, col: usize) -> &[u64] {
        &self.bits[col * self.words_per_col..(col + 1) * self.words_per_col]
    }

    pub fn count_significant(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Overwrites the states from a bit mask, node `col * rows + r` at bit
    /// position `col * rows + r`. Only meaningful for nets with ≤ 64 nodes.
    pub fn load_mask(&mut self, mask: u64) {
        debug_assert!(self.rows * self.config.n <= 64);
        for col in 0..self.config.n {
            for r in 0..self.rows {
                let idx = col * self.rows + r;
                self.set(col, r, (mask >> idx) & 1 == 1);
            }
        }
    }

    /// Row-major dump: 16-byte header, per-axis dims, `p`, `seed`, then bits
    /// MSB-first with rows (flattened transverse index) outermost.
    ///
    /// Header: magic `BNET`, version `u16`, axis count `u16`, `n: u32`,
    /// `rows: u32`, all little-endian.
    pub fn to_bit_dump(&self) -> Vec<u8> {
        let n = self.config.n;
        let mut out = Vec::with_capacity(32 + (n * self.rows).div_ceil(8));
        out.extend_from_slice(BIT_DUMP_MAGIC);
        out.extend_from_slice(&BIT_DUMP_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.config.row_dims.len() as u16).to_le_bytes());
        out.extend_from_slice(&(n as u32).to_le_bytes());
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        for d in &self.config.row_dims {
            out.extend_from_slice(&(d.m as u32).to_le_bytes());
            out.extend_from_slice(&(d.c as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.config.p.to_le_bytes());
        out.extend_from_slice(&self.config.seed.to_le_bytes());
        let mut byte = 0u8;
        let mut filled = 0;
        for r in 0..self.rows {
            for col in 0..n {
                byte = (byte << 1) | self.get(col, r) as u8;
                filled += 1;
                if filled == 8 {
                    out.push(byte);
                    byte = 0;
                    filled = 0;
                }
            }
        }
        if filled > 0 {
            out.push(byte << (8 - filled));
        }
        out
    }

    pub fn from_bit_dump(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        ensure!(cur.take(4)? == BIT_DUMP_MAGIC, Format, "bad magic");
        let version = cur.u16()?;
        ensure!(version == BIT_DUMP_VERSION, Format, "unsupported version {version}");
        let axes = cur.u16()? as usize;
        let n = cur.u32()? as usize;
        let rows = cur.u32()? as usize;
        let mut row_dims = Vec::with_capacity(axes);
        for _ in 0..axes {
            let m = cur.u32()? as usize;
            let c = cur.u32()? as usize;
            row_dims.push(RowDim { m, c });
        }
        let p = f64::from_le_bytes(cur.take(8)?.try_into().expect("8 bytes"));
        let seed = u64::from_le_bytes(cur.take(8)?.try_into().expect("8 bytes"));
        let config = NetConfig { n, row_dims, p, seed };
        config.validate()?;
        ensure!(config.rows() == rows, Format, "row count {rows} does not match dims");
        let payload = cur.take((n * rows).div_ceil(8))?;
        ensure!(cur.pos == bytes.len(), Format, "trailing bytes");
        let mut net = Self::zeros(&config)?;
        let mut idx = 0;
        for r in 0..rows {
            for col in 0..n {
                let bit = (payload[idx / 8] >> (7 - idx % 8)) & 1 == 1;
                net.set(col, r, bit);
                idx += 1;
            }
        }
        Ok(net)
    }
}

const BIT_DUMP_MAGIC: &[u8; 4] = b"BNET";
const BIT_DUMP_VERSION: u16 = 1;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        ensure!(self.pos + k <= self.bytes.len(), Format, "truncated bit dump");
        let s = &self.bytes[self.pos..self.pos + k];
        self.pos += k;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

/// Uniform variate attached to node `(col, r)` (0-based) under `key`.
///
/// Thresholding the same field at two probabilities gives coupled nets.
#[inline]
pub fn node_uniform(key: u64, rows: usize, col: usize, r: usize) -> f64 {
    rng::uniform(key, (col * rows + r) as u64)
}

/// Draws a net: node `(col, r)` is significant iff its uniform is `< p`.
pub fn generate_net(config: &NetConfig) -> Result<Net> {
    config.validate()?;
    let key = config.node_key();
    let rows = config.rows();
    let p = config.p;
    Net::from_fn(config, |col, r| node_uniform(key, rows, col, r) < p)
}

/// All nodes in column `coord.col + 1` connected to `coord`, in ascending
/// lexicographic order of their rows.
pub fn neighbors(config: &NetConfig, coord: &NodeCoord) -> Result<Vec<NodeCoord>> {
    config.validate()?;
    ensure!(coord.in_bounds(config), OutOfBounds, "{coord:?}");
    ensure!(coord.col < config.n, OutOfBounds, "{coord:?} is in the last column");
    let t = config.transverse();
    let (col0, r) = coord.to_internal(&t);
    let mut out = Vec::new();
    t.box_around(r, &mut out);
    Ok(out.into_iter().map(|r2| NodeCoord::from_internal(col0 + 1, r2, &t)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn degenerate_probabilities() {
        let zero = generate_net(&NetConfig::planar(7, 9, 2, 0.0, 1)).unwrap();
        assert_eq!(zero.count_significant(), 0);
        let one = generate_net(&NetConfig { n: 5, row_dims: vec![(3, 1).into(), (4, 2).into()], p: 1.0, seed: 3 })
            .unwrap();
        assert_eq!(one.count_significant(), 5 * 12);
    }

    #[test]
    fn fair_net_density() {
        let net = generate_net(&NetConfig::planar(100, 100, 1, 0.5, 2024)).unwrap();
        let mean = net.count_significant() as f64 / 1e4;
        assert!((mean - 0.5).abs() <= 0.02, "mean = {mean}");
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(generate_net(&NetConfig::planar(0, 3, 1, 0.5, 0)).is_err());
        assert!(generate_net(&NetConfig::planar(3, 0, 1, 0.5, 0)).is_err());
        assert!(generate_net(&NetConfig::planar(3, 3, 0, 0.5, 0)).is_err());
        assert!(generate_net(&NetConfig::planar(3, 3, 1, 1.5, 0)).is_err());
        assert!(generate_net(&NetConfig::planar(3, 3, 1, -0.1, 0)).is_err());
        assert!(generate_net(&NetConfig { n: 3, row_dims: vec![], p: 0.5, seed: 0 }).is_err());
    }

    #[test]
    fn planar_neighbors() {
        let cfg = NetConfig::planar(5, 4, 1, 0.5, 0);
        let got = neighbors(&cfg, &NodeCoord::planar(1, 3)).unwrap();
        assert_eq!(got, vec![NodeCoord::planar(2, 2), NodeCoord::planar(2, 3), NodeCoord::planar(2, 4)]);
        let got = neighbors(&cfg, &NodeCoord::planar(1, 1)).unwrap();
        assert_eq!(got, vec![NodeCoord::planar(2, 1), NodeCoord::planar(2, 2)]);
        assert!(neighbors(&cfg, &NodeCoord::planar(4, 1)).is_err());
        assert!(neighbors(&cfg, &NodeCoord::planar(1, 6)).is_err());
        assert!(neighbors(&cfg, &NodeCoord::planar(0, 1)).is_err());
    }

    #[test]
    fn eighty_one_neighbors_in_three_dimensions() {
        let cfg = NetConfig { n: 3, row_dims: vec![(20, 4).into(), (20, 4).into()], p: 0.5, seed: 0 };
        let got = neighbors(&cfg, &NodeCoord { col: 1, rows: vec![10, 10] }).unwrap();
        assert_eq!(got.len(), 81);
        assert!(got.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn bit_dump_layout() {
        let cfg = NetConfig::planar(2, 3, 1, 0.25, 11);
        let mut net = Net::zeros(&cfg).unwrap();
        net.set(0, 0, true);
        net.set(2, 1, true);
        let dump = net.to_bit_dump();
        assert_eq!(&dump[..4], b"BNET");
        assert_eq!(dump.len(), 16 + 8 + 16 + 1);
        // row 0: 1 0 0, row 1: 0 0 1
        assert_eq!(*dump.last().unwrap(), 0b1000_0100);
        assert_eq!(Net::from_bit_dump(&dump).unwrap(), net);
        assert!(Net::from_bit_dump(&dump[..dump.len() - 1]).is_err());
    }

    #[test]
    fn config_json_shape() {
        let cfg = NetConfig { n: 4, row_dims: vec![(3, 1).into(), (5, 2).into()], p: 0.3, seed: 9 };
        let v = serde_json::to_value(&cfg).unwrap();
        assert_eq!(v["row_dims"], serde_json::json!([[3, 1], [5, 2]]));
        let back: NetConfig = serde_json::from_value(v).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn generation_is_independent_of_worker_count() {
        let cfg = NetConfig::planar(200, 150, 2, 0.3, 77);
        let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let wide = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = serial.install(|| generate_net(&cfg).unwrap());
        let b = wide.install(|| generate_net(&cfg).unwrap());
        assert_eq!(a, b);
    }

    fn arb_config() -> impl Strategy<Value = NetConfig> {
        (
            1usize..6,
            prop::collection::vec((1usize..7, 1usize..3), 1..3),
            0.0f64..=1.0,
            any::<u64>(),
        )
            .prop_map(|(n, dims, p, seed)| NetConfig {
                n,
                row_dims: dims.into_iter().map(RowDim::from).collect(),
                p,
                seed,
            })
    }

    proptest! {
        #[test]
        fn regeneration_is_bit_identical(cfg in arb_config()) {
            let a = generate_net(&cfg).unwrap();
            let b = generate_net(&cfg).unwrap();
            prop_assert_eq!(a.count_significant(), b.count_significant());
            prop_assert_eq!(Net::from_bit_dump(&a.to_bit_dump()).unwrap(), b);
        }

        #[test]
        fn neighbor_sets_mirror_through_the_midline(m in 1usize..12, c in 1usize..4, row in 1usize..12) {
            prop_assume!(row <= m);
            let cfg = NetConfig::planar(m, 2, c, 0.5, 0);
            let mirror = |x: &NodeCoord| NodeCoord::planar(x.col, m + 1 - x.rows[0]);
            let mut lhs: Vec<_> = neighbors(&cfg, &NodeCoord::planar(1, row)).unwrap().iter().map(mirror).collect();
            lhs.sort();
            let rhs = neighbors(&cfg, &NodeCoord::planar(1, m + 1 - row)).unwrap();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn interior_neighbor_count(c1 in 1usize..4, c2 in 1usize..3) {
            let cfg = NetConfig { n: 2, row_dims: vec![(2 * c1 + 3, c1).into(), (2 * c2 + 3, c2).into()], p: 0.5, seed: 0 };
            let coord = NodeCoord { col: 1, rows: vec![c1 + 2, c2 + 2] };
            let got = neighbors(&cfg, &coord).unwrap();
            prop_assert_eq!(got.len(), (2 * c1 + 1) * (2 * c2 + 1));
            prop_assert!(got.iter().all(|x| coord.connects_to(x, &cfg)));
        }
    }
}
