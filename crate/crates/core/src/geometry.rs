//! Frames, neighborhood keys and configuration counting.
//!
//! The frame of order `j` around a site is the ring of `8j` sites at
//! Chebyshev distance exactly `j`. A neighborhood of order `k` is the
//! concatenation of frames `1..=k` and holds `4k² + 4k` sites.
//!
//! Frame offsets are listed in row-major order over the ring: the top row
//! left to right, then the two side cells of each middle row, then the
//! bottom row left to right. `POSITION` keys use exactly this order.
//!
//! Key strings are stable and used in every file format:
//!
//! * root: `root`
//! * `COUNT`: `1:7,1|2:12,4` (per-symbol counts of each frame, alphabet order)
//! * `POSITION`: `1:0 0 1 0 0 0 0 0|2:...` (symbol index per ring site)

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{PcnError, Result};
use crate::grid::{self, BoundaryPolicy, Grid, Site};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameMode {
    /// Frames are identified by how many sites hold each symbol.
    #[default]
    Count,
    /// Frames are identified by the symbol at every ring position.
    Position,
}

impl fmt::Display for FrameMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FrameMode::Count => "count",
            FrameMode::Position => "position",
        })
    }
}

impl FromStr for FrameMode {
    type Err = PcnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "count" => Ok(FrameMode::Count),
            "position" => Ok(FrameMode::Position),
            other => Err(PcnError::Config(format!("unknown frame mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum FramePayload {
    Count(Vec<u32>),
    Position(Vec<u8>),
}

/// Canonical identifier of one frame configuration.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FrameKey {
    order: usize,
    payload: FramePayload,
}

impl FrameKey {
    pub fn count(order: usize, counts: Vec<u32>) -> Result<Self> {
        let total: u32 = counts.iter().sum();
        if order == 0 || total as usize != 8 * order {
            return Err(PcnError::Model(format!(
                "count frame of order {order} must sum to {}, got {total}",
                8 * order
            )));
        }
        Ok(FrameKey {
            order,
            payload: FramePayload::Count(counts),
        })
    }

    pub fn position(order: usize, symbols: Vec<u8>) -> Result<Self> {
        if order == 0 || symbols.len() != 8 * order {
            return Err(PcnError::Model(format!(
                "position frame of order {order} needs {} symbols, got {}",
                8 * order,
                symbols.len()
            )));
        }
        Ok(FrameKey {
            order,
            payload: FramePayload::Position(symbols),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn mode(&self) -> FrameMode {
        match self.payload {
            FramePayload::Count(_) => FrameMode::Count,
            FramePayload::Position(_) => FrameMode::Position,
        }
    }

    pub fn payload(&self) -> &FramePayload {
        &self.payload
    }

    /// Per-symbol counts of the frame, whatever the mode.
    pub fn symbol_counts(&self, alphabet_size: usize) -> Vec<u32> {
        match &self.payload {
            FramePayload::Count(c) => c.clone(),
            FramePayload::Position(p) => {
                let mut c = vec![0; alphabet_size];
                for &s in p {
                    c[s as usize] += 1;
                }
                c
            }
        }
    }

    fn validate_alphabet(&self, alphabet_size: usize) -> Result<()> {
        let ok = match &self.payload {
            FramePayload::Count(c) => c.len() == alphabet_size,
            FramePayload::Position(p) => p.iter().all(|&s| (s as usize) < alphabet_size),
        };
        if ok {
            Ok(())
        } else {
            Err(PcnError::Model(format!(
                "frame {self} does not match an alphabet of size {alphabet_size}"
            )))
        }
    }
}

impl Ord for FrameKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.order.cmp(&other.order).then_with(|| match (&self.payload, &other.payload) {
            // Counts sort by the last symbol first, so for a binary alphabet
            // frames come out in increasing number of the second symbol.
            (FramePayload::Count(a), FramePayload::Count(b)) => a.iter().rev().cmp(b.iter().rev()),
            (FramePayload::Position(a), FramePayload::Position(b)) => a.cmp(b),
            (FramePayload::Count(_), FramePayload::Position(_)) => Ordering::Less,
            (FramePayload::Position(_), FramePayload::Count(_)) => Ordering::Greater,
        })
    }
}

impl PartialOrd for FrameKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for FrameKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.order)?;
        match &self.payload {
            FramePayload::Count(c) => {
                for (i, v) in c.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{v}")?;
                }
            }
            FramePayload::Position(p) => {
                for (i, v) in p.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{v}")?;
                }
            }
        }
        Ok(())
    }
}

impl FromStr for FrameKey {
    type Err = PcnError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || PcnError::Model(format!("malformed frame key {s:?}"));
        let (order, payload) = s.split_once(':').ok_or_else(bad)?;
        let order: usize = order.trim().parse().map_err(|_| bad())?;
        if payload.contains(',') {
            let counts = payload
                .split(',')
                .map(|t| t.trim().parse::<u32>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad())?;
            FrameKey::count(order, counts)
        } else {
            let symbols = payload
                .split_whitespace()
                .map(|t| t.parse::<u8>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad())?;
            FrameKey::position(order, symbols)
        }
    }
}

/// Concatenation of frames of orders `1..=j`; the empty key is the root.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ContextKey {
    frames: Vec<FrameKey>,
}

impl ContextKey {
    pub fn root() -> Self {
        ContextKey { frames: Vec::new() }
    }

    pub fn new(frames: Vec<FrameKey>) -> Result<Self> {
        for (i, f) in frames.iter().enumerate() {
            if f.order != i + 1 {
                return Err(PcnError::Model(format!(
                    "frame {} has order {}, expected {}",
                    i,
                    f.order,
                    i + 1
                )));
            }
            if f.mode() != frames[0].mode() {
                return Err(PcnError::ModeMismatch("frames of one key must share a mode".into()));
            }
        }
        Ok(ContextKey { frames })
    }

    /// Convenience for binary `COUNT` keys: `counts_of_second[j]` is the
    /// number of second-symbol sites in frame `j + 1`.
    pub fn binary_counts(counts_of_second: &[u32]) -> Result<Self> {
        let frames = counts_of_second
            .iter()
            .enumerate()
            .map(|(i, &b)| {
                let total = 8 * (i as u32 + 1);
                if b > total {
                    return Err(PcnError::Model(format!("{b} exceeds frame size {total}")));
                }
                FrameKey::count(i + 1, vec![total - b, b])
            })
            .collect::<Result<Vec<_>>>()?;
        ContextKey::new(frames)
    }

    pub fn order(&self) -> usize {
        self.frames.len()
    }

    pub fn is_root(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[FrameKey] {
        &self.frames
    }

    pub fn mode(&self) -> Option<FrameMode> {
        self.frames.first().map(FrameKey::mode)
    }

    pub fn last(&self) -> Option<&FrameKey> {
        self.frames.last()
    }

    /// Key of the parent node, `None` for the root.
    pub fn parent(&self) -> Option<ContextKey> {
        if self.frames.is_empty() {
            None
        } else {
            Some(ContextKey {
                frames: self.frames[..self.frames.len() - 1].to_vec(),
            })
        }
    }

    pub fn prefix(&self, order: usize) -> ContextKey {
        ContextKey {
            frames: self.frames[..order.min(self.frames.len())].to_vec(),
        }
    }

    pub fn child(&self, frame: FrameKey) -> Result<ContextKey> {
        if frame.order != self.order() + 1 {
            return Err(PcnError::Model(format!(
                "cannot extend a key of order {} with a frame of order {}",
                self.order(),
                frame.order
            )));
        }
        if let Some(m) = self.mode() {
            if m != frame.mode() {
                return Err(PcnError::ModeMismatch(format!("{m} key, {} frame", frame.mode())));
            }
        }
        let mut frames = self.frames.clone();
        frames.push(frame);
        Ok(ContextKey { frames })
    }

    pub fn validate_alphabet(&self, alphabet_size: usize) -> Result<()> {
        self.frames.iter().try_for_each(|f| f.validate_alphabet(alphabet_size))
    }
}

impl fmt::Display for ContextKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.frames.is_empty() {
            return f.write_str("root");
        }
        for (i, frame) in self.frames.iter().enumerate() {
            if i > 0 {
                f.write_str("|")?;
            }
            write!(f, "{frame}")?;
        }
        Ok(())
    }
}

impl FromStr for ContextKey {
    type Err = PcnError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "root" {
            return Ok(ContextKey::root());
        }
        let frames = s.split('|').map(str::parse).collect::<Result<Vec<FrameKey>>>()?;
        ContextKey::new(frames)
    }
}

impl Serialize for ContextKey {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ContextKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The `8j` offsets `(dr, dc)` of the order-`j` frame in canonical order.
pub fn frame_offsets(j: usize) -> Vec<(isize, isize)> {
    let j = j as isize;
    let mut out = Vec::with_capacity(8 * j as usize);
    for dr in -j..=j {
        for dc in -j..=j {
            if dr.abs().max(dc.abs()) == j {
                out.push((dr, dc));
            }
        }
    }
    out
}

/// Number of sites in the order-`k` neighborhood, center excluded.
pub fn neighborhood_size(k: usize) -> usize {
    4 * k * k + 4 * k
}

fn binomial(n: u128, k: u128) -> Result<u128> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step
        acc = acc.checked_mul(n - i).ok_or(PcnError::CountOverflow)? / (i + 1);
    }
    Ok(acc)
}

/// Number of distinct order-`j` frame configurations.
pub fn num_classes(j: usize, alphabet_size: usize, mode: FrameMode) -> Result<u128> {
    if j == 0 || alphabet_size < 2 {
        return Err(PcnError::Config("num_classes needs j >= 1 and |A| >= 2".into()));
    }
    match mode {
        FrameMode::Count => binomial((8 * j + alphabet_size - 1) as u128, (alphabet_size - 1) as u128),
        FrameMode::Position => checked_pow(alphabet_size as u128, 8 * j),
    }
}

/// Number of leaves of the complete tree of the given depth.
pub fn max_leaves(depth: usize, alphabet_size: usize, mode: FrameMode) -> Result<u128> {
    if depth == 0 {
        return Err(PcnError::Config("max_leaves needs depth >= 1".into()));
    }
    match mode {
        FrameMode::Count => (1..=depth).try_fold(1u128, |acc, k| {
            acc.checked_mul(num_classes(k, alphabet_size, mode)?)
                .ok_or(PcnError::CountOverflow)
        }),
        FrameMode::Position => checked_pow(alphabet_size as u128, neighborhood_size(depth)),
    }
}

fn checked_pow(base: u128, exp: usize) -> Result<u128> {
    (0..exp).try_fold(1u128, |acc, _| acc.checked_mul(base).ok_or(PcnError::CountOverflow))
}

/// All `COUNT` payloads of order `j`, in canonical key order.
pub fn count_classes(j: usize, alphabet_size: usize) -> Vec<Vec<u32>> {
    fn rec(left: u32, slots: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if slots == 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for v in 0..=left {
            cur.push(v);
            rec(left - v, slots - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(8 * j as u32, alphabet_size, &mut Vec::new(), &mut out);
    out.sort_by(|a, b| a.iter().rev().cmp(b.iter().rev()));
    out
}

/// Reads the symbols of the order-`j` frame around `site` into `out`, in
/// canonical offset order. The caller guarantees the site is a valid center.
pub(crate) fn read_frame(
    grid: &Grid,
    site: Site,
    offsets: &[(isize, isize)],
    policy: BoundaryPolicy,
    out: &mut Vec<u8>,
) {
    out.clear();
    let (r0, c0) = (site.row as isize, site.col as isize);
    match policy {
        BoundaryPolicy::Mirror => {
            for &(dr, dc) in offsets {
                let r = grid::reflect(r0 + dr, grid.rows());
                let c = grid::reflect(c0 + dc, grid.cols());
                out.push(grid.neighbor_symbol(r, c));
            }
        }
        BoundaryPolicy::InteriorOnly | BoundaryPolicy::Buffer { .. } => {
            for &(dr, dc) in offsets {
                out.push(grid.neighbor_symbol((r0 + dr) as usize, (c0 + dc) as usize));
            }
        }
    }
}

pub(crate) fn frame_key_from_symbols(
    order: usize,
    symbols: &[u8],
    mode: FrameMode,
    alphabet_size: usize,
) -> FrameKey {
    let payload = match mode {
        FrameMode::Count => {
            let mut c = vec![0u32; alphabet_size];
            for &s in symbols {
                c[s as usize] += 1;
            }
            FramePayload::Count(c)
        }
        FrameMode::Position => FramePayload::Position(symbols.to_vec()),
    };
    FrameKey { order, payload }
}

/// Configuration of the order-`depth` neighborhood around `site`.
pub fn extract_context(
    grid: &Grid,
    site: Site,
    depth: usize,
    mode: FrameMode,
    policy: BoundaryPolicy,
) -> Result<ContextKey> {
    if !grid::is_valid_center(grid, site, depth, policy) {
        return Err(PcnError::OutOfBounds {
            row: site.row,
            col: site.col,
            depth,
        });
    }
    let k = grid.alphabet().size();
    let mut buf = Vec::with_capacity(8 * depth);
    let frames = (1..=depth)
        .map(|j| {
            read_frame(grid, site, &frame_offsets(j), policy, &mut buf);
            frame_key_from_symbols(j, &buf, mode, k)
        })
        .collect();
    Ok(ContextKey { frames })
}

/// True when `shorter` is a prefix of `longer` (the root is a suffix of
/// every key).
pub fn is_suffix(shorter: &ContextKey, longer: &ContextKey) -> Result<bool> {
    if let (Some(a), Some(b)) = (shorter.mode(), longer.mode()) {
        if a != b {
            return Err(PcnError::ModeMismatch(format!("{a} key compared with {b} key")));
        }
    }
    Ok(shorter.order() <= longer.order() && longer.frames[..shorter.order()] == shorter.frames[..])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Alphabet;
    use std::collections::{HashMap, HashSet};

    fn key(s: &str) -> ContextKey {
        s.parse().unwrap()
    }

    #[test]
    fn frame_sizes() {
        assert_eq!(frame_offsets(1).len(), 8);
        assert_eq!(frame_offsets(2).len(), 16);
        assert_eq!(frame_offsets(3).len(), 24);
    }

    #[test]
    fn frame_offsets_are_rings() {
        for j in 1..=6 {
            let offs = frame_offsets(j);
            let set: HashSet<_> = offs.iter().copied().collect();
            assert_eq!(set.len(), offs.len());
            assert!(!set.contains(&(0, 0)));
            assert!(offs.iter().all(|&(r, c)| r.abs().max(c.abs()) == j as isize));
            let total: usize = (1..=j).map(|i| frame_offsets(i).len()).sum();
            assert_eq!(total, neighborhood_size(j));
        }
        assert_eq!(
            frame_offsets(1),
            vec![(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
        );
    }

    #[test]
    fn neighborhood_sizes() {
        assert_eq!(neighborhood_size(1), 8);
        assert_eq!(neighborhood_size(2), 24);
        assert_eq!(neighborhood_size(5), 120);
    }

    #[test]
    fn class_counts() {
        assert_eq!(num_classes(1, 2, FrameMode::Count).unwrap(), 9);
        assert_eq!(num_classes(2, 2, FrameMode::Count).unwrap(), 17);
        assert_eq!(num_classes(1, 2, FrameMode::Position).unwrap(), 256);
        assert_eq!(max_leaves(2, 2, FrameMode::Count).unwrap(), 153);
        assert_eq!(max_leaves(1, 2, FrameMode::Count).unwrap(), 9);
        assert_eq!(max_leaves(1, 2, FrameMode::Position).unwrap(), 256);
        assert_eq!(max_leaves(2, 2, FrameMode::Position).unwrap(), 1 << 24);
    }

    #[test]
    fn three_symbol_classes_match_brute_force() {
        // multisets of size 8 over 3 symbols, enumerated directly
        let mut n = 0;
        for a in 0..=8 {
            for b in 0..=8 {
                for c in 0..=8 {
                    if a + b + c == 8 {
                        n += 1;
                    }
                }
            }
        }
        assert_eq!(n, 45);
        assert_eq!(num_classes(1, 3, FrameMode::Count).unwrap(), n);
        assert_eq!(count_classes(1, 3).len(), 45);
    }

    #[test]
    fn overflow_is_reported() {
        assert_eq!(
            num_classes(40, 2, FrameMode::Position).unwrap_err().code(),
            "COUNT_OVERFLOW"
        );
    }

    #[test]
    fn count_classes_partition_positions() {
        // every binary first-order ring maps to the class with its black count,
        // and class c holds C(8, c) rings
        let mut by_class: HashMap<Vec<u32>, u32> = HashMap::new();
        for bits in 0u32..256 {
            let syms: Vec<u8> = (0..8).map(|i| ((bits >> i) & 1) as u8).collect();
            let k = frame_key_from_symbols(1, &syms, FrameMode::Count, 2);
            match k.payload() {
                FramePayload::Count(c) => *by_class.entry(c.clone()).or_default() += 1,
                _ => unreachable!(),
            }
        }
        assert_eq!(by_class.len(), 9);
        let binom = [1, 8, 28, 56, 70, 56, 28, 8, 1];
        for (b, &expected) in binom.iter().enumerate() {
            assert_eq!(by_class[&vec![8 - b as u32, b as u32]], expected);
        }
        assert_eq!(by_class.values().sum::<u32>(), 256);
    }

    #[test]
    fn count_classes_are_in_key_order() {
        let classes = count_classes(1, 2);
        assert_eq!(classes.first().unwrap(), &vec![8, 0]);
        assert_eq!(classes.last().unwrap(), &vec![0, 8]);
        let keys: Vec<FrameKey> = classes.iter().map(|c| FrameKey::count(1, c.clone()).unwrap()).collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn key_strings_round_trip() {
        for s in ["root", "1:8,0", "1:7,1|2:12,4", "1:0 1 0 0 1 1 0 0"] {
            assert_eq!(key(s).to_string(), s);
        }
        assert!("1:7,2".parse::<ContextKey>().is_err());
        assert!("2:16,0".parse::<ContextKey>().is_err());
    }

    #[test]
    fn extraction_on_small_grids() {
        let a = Alphabet::new(["w", "b"]).unwrap();
        let white = Grid::filled(3, 3, 0, a.clone()).unwrap();
        let c = Site::new(1, 1);
        let k = extract_context(&white, c, 1, FrameMode::Count, BoundaryPolicy::InteriorOnly).unwrap();
        assert_eq!(k, key("1:8,0"));

        let mut corner = white.clone();
        corner.set(0, 0, 1);
        let k = extract_context(&corner, c, 1, FrameMode::Count, BoundaryPolicy::InteriorOnly).unwrap();
        assert_eq!(k, key("1:7,1"));
        let k = extract_context(&corner, c, 1, FrameMode::Position, BoundaryPolicy::InteriorOnly).unwrap();
        assert_eq!(k, key("1:1 0 0 0 0 0 0 0"));

        // checkerboard by (r + c) parity; the center (2, 2) is white
        let cells = (0..25).map(|i| ((i / 5 + i % 5) % 2) as u8).collect();
        let cb = Grid::from_cells(5, 5, cells, a).unwrap();
        let k = extract_context(&cb, Site::new(2, 2), 2, FrameMode::Count, BoundaryPolicy::InteriorOnly).unwrap();
        assert_eq!(k, key("1:4,4|2:8,8"));
    }

    #[test]
    fn extraction_outside_valid_region_fails() {
        let a = Alphabet::new(["w", "b"]).unwrap();
        let g = Grid::filled(3, 3, 0, a).unwrap();
        let err = extract_context(&g, Site::new(0, 1), 1, FrameMode::Count, BoundaryPolicy::InteriorOnly)
            .unwrap_err();
        assert_eq!(err.code(), "OUT_OF_BOUNDS");
        // mirroring resolves the same site
        let k = extract_context(&g, Site::new(0, 1), 1, FrameMode::Count, BoundaryPolicy::Mirror).unwrap();
        assert_eq!(k, key("1:8,0"));
    }

    #[test]
    fn suffix_relation() {
        assert!(is_suffix(&key("1:8,0"), &key("1:8,0|2:16,0")).unwrap());
        assert!(!is_suffix(&key("1:7,1"), &key("1:8,0|2:16,0")).unwrap());
        assert!(is_suffix(&ContextKey::root(), &key("1:8,0|2:16,0")).unwrap());
        assert!(!is_suffix(&key("1:8,0|2:16,0"), &key("1:8,0")).unwrap());
        assert_eq!(
            is_suffix(&key("1:8,0"), &key("1:0 0 0 0 0 0 0 0")).unwrap_err().code(),
            "MODE_ERROR"
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_key() -> impl Strategy<Value = ContextKey> {
            prop::collection::vec(0u32..=2, 0..4).prop_map(|v| {
                // small black counts so that prefixes collide often
                ContextKey::binary_counts(&v).unwrap()
            })
        }

        proptest! {
            #[test]
            fn suffix_is_a_partial_order(a in arb_key(), b in arb_key(), c in arb_key()) {
                prop_assert!(is_suffix(&a, &a).unwrap());
                if is_suffix(&a, &b).unwrap() && is_suffix(&b, &a).unwrap() {
                    prop_assert_eq!(&a, &b);
                }
                if is_suffix(&a, &b).unwrap() && is_suffix(&b, &c).unwrap() {
                    prop_assert!(is_suffix(&a, &c).unwrap());
                }
            }

            #[test]
            fn key_string_round_trip(a in arb_key()) {
                let s = a.to_string();
                prop_assert_eq!(s.parse::<ContextKey>().unwrap(), a);
            }
        }
    }
}
