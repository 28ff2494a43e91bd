//! The counting tree: every observed neighborhood prefix of the sample with
//! its occurrence count and per-center-symbol counts.
//!
//! Counting happens at one fixed depth `D`. A site is either a valid center
//! at depth `D` and contributes to all of its prefixes of orders `0..=D`, or
//! it contributes nothing. Parent counts therefore always equal the sum of
//! their children's counts.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PcnError, Result};
use crate::geometry::{self, ContextKey, FrameKey, FrameMode};
use crate::grid::{self, Alphabet, BoundaryPolicy, Grid, Site};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountNode {
    pub key: ContextKey,
    pub n_occ: u64,
    pub center_counts: Vec<u64>,
    pub children: BTreeMap<FrameKey, CountNode>,
}

impl CountNode {
    fn empty(key: ContextKey, alphabet_size: usize) -> Self {
        CountNode {
            key,
            n_occ: 0,
            center_counts: vec![0; alphabet_size],
            children: BTreeMap::new(),
        }
    }

    pub fn order(&self) -> usize {
        self.key.order()
    }

    /// Empirical conditional distribution `count_a / n_occ`.
    pub fn empirical(&self) -> Vec<f64> {
        let n = self.n_occ as f64;
        self.center_counts.iter().map(|&c| c as f64 / n).collect()
    }

    /// Depth-first visit in canonical child order, parents first.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a CountNode)) {
        f(self);
        for child in self.children.values() {
            child.visit(f);
        }
    }

    fn merge_from(&mut self, other: &CountNode) {
        self.n_occ += other.n_occ;
        for (a, b) in self.center_counts.iter_mut().zip(&other.center_counts) {
            *a += b;
        }
        for (fk, oc) in &other.children {
            match self.children.get_mut(fk) {
                Some(c) => c.merge_from(oc),
                None => {
                    self.children.insert(fk.clone(), oc.clone());
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTree {
    pub root: CountNode,
    pub max_depth: usize,
    /// Number of evaluated centers.
    pub n_total: u64,
    pub mode: FrameMode,
    pub alphabet: Alphabet,
}

impl CountTree {
    pub fn empty(max_depth: usize, mode: FrameMode, alphabet: Alphabet) -> Self {
        CountTree {
            root: CountNode::empty(ContextKey::root(), alphabet.size()),
            max_depth,
            n_total: 0,
            mode,
            alphabet,
        }
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet.size()
    }

    pub fn nodes(&self) -> Vec<&CountNode> {
        let mut out = Vec::new();
        self.root.visit(&mut |n| out.push(n));
        out
    }

    pub fn node_count(&self) -> usize {
        let mut n = 0;
        self.root.visit(&mut |_| n += 1);
        n
    }

    /// Counts one center site through every prefix of its neighborhood.
    fn add_site(&mut self, grid: &Grid, site: Site, policy: BoundaryPolicy, offsets: &[Vec<(isize, isize)>], buf: &mut Vec<u8>) {
        let k = self.alphabet.size();
        let center = grid.get(site.row, site.col).expect("centers are never masked") as usize;
        let mut node = &mut self.root;
        node.n_occ += 1;
        node.center_counts[center] += 1;
        for (j, offs) in offsets.iter().enumerate() {
            geometry::read_frame(grid, site, offs, policy, buf);
            let fk = geometry::frame_key_from_symbols(j + 1, buf, self.mode, k);
            let CountNode { key, children, .. } = node;
            node = match children.entry(fk) {
                std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::btree_map::Entry::Vacant(e) => {
                    let child_key = key.child(e.key().clone()).expect("consistent frame orders");
                    e.insert(CountNode::empty(child_key, k))
                }
            };
            node.n_occ += 1;
            node.center_counts[center] += 1;
        }
        self.n_total += 1;
    }
}

fn build_from_sites(grid: &Grid, sites: &[Site], depth: usize, mode: FrameMode, policy: BoundaryPolicy) -> CountTree {
    let offsets: Vec<_> = (1..=depth).map(geometry::frame_offsets).collect();
    let mut tree = CountTree::empty(depth, mode, grid.alphabet().clone());
    let mut buf = Vec::with_capacity(8 * depth);
    for &s in sites {
        tree.add_site(grid, s, policy, &offsets, &mut buf);
    }
    tree
}

fn check_policy(grid: &Grid, depth: usize, policy: BoundaryPolicy) -> Result<()> {
    if depth == 0 {
        return Err(PcnError::Config("counting depth must be at least 1".into()));
    }
    if let BoundaryPolicy::Buffer { margin } = policy {
        if margin < depth {
            return Err(PcnError::Margin {
                margin,
                rows: grid.rows(),
                cols: grid.cols(),
            });
        }
    }
    Ok(())
}

/// Counts every valid center of `grid` at depth `depth`.
pub fn build_count_tree(grid: &Grid, depth: usize, mode: FrameMode, policy: BoundaryPolicy) -> Result<CountTree> {
    build_count_tree_sharded(grid, depth, mode, policy, 1)
}

/// Like [`build_count_tree`], splitting the centers into `workers` shards
/// that are counted in parallel and merged in shard order. The result does
/// not depend on `workers`.
pub fn build_count_tree_sharded(
    grid: &Grid,
    depth: usize,
    mode: FrameMode,
    policy: BoundaryPolicy,
    workers: usize,
) -> Result<CountTree> {
    check_policy(grid, depth, policy)?;
    let sites = grid::valid_centers(grid, depth, policy);
    if sites.is_empty() {
        return Err(PcnError::EmptySample);
    }
    let workers = workers.max(1);
    if workers == 1 {
        return Ok(build_from_sites(grid, &sites, depth, mode, policy));
    }
    let chunk = sites.len().div_ceil(workers);
    let partials: Vec<CountTree> = sites
        .par_chunks(chunk)
        .map(|s| build_from_sites(grid, s, depth, mode, policy))
        .collect();
    let mut iter = partials.into_iter();
    let mut acc = iter.next().expect("at least one shard");
    for t in iter {
        acc = merge_count_trees(&acc, &t)?;
    }
    Ok(acc)
}

/// Node-wise sum of two trees built with the same configuration.
pub fn merge_count_trees(a: &CountTree, b: &CountTree) -> Result<CountTree> {
    if a.max_depth != b.max_depth {
        return Err(PcnError::MergeMismatch(format!("depth {} vs {}", a.max_depth, b.max_depth)));
    }
    if a.mode != b.mode {
        return Err(PcnError::MergeMismatch(format!("mode {} vs {}", a.mode, b.mode)));
    }
    if a.alphabet != b.alphabet {
        return Err(PcnError::MergeMismatch(format!("alphabet {} vs {}", a.alphabet, b.alphabet)));
    }
    let mut out = a.clone();
    out.root.merge_from(&b.root);
    out.n_total += b.n_total;
    Ok(out)
}

/// The node with exactly this key, if it was observed.
pub fn node_lookup<'a>(tree: &'a CountTree, key: &ContextKey) -> Option<&'a CountNode> {
    let mut node = &tree.root;
    for fk in key.frames() {
        node = node.children.get(fk)?;
    }
    Some(node)
}

pub const COUNT_TREE_FORMAT: &str = "pcn-count-tree/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CountNodeRecord {
    pub key: ContextKey,
    pub n_occ: u64,
    pub center_counts: Vec<u64>,
}

/// JSON form of a [`CountTree`]: nodes depth-first, parents before children.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CountTreeDump {
    pub format: String,
    pub alphabet: Alphabet,
    pub mode: FrameMode,
    pub max_depth: usize,
    pub n_total: u64,
    pub nodes: Vec<CountNodeRecord>,
}

impl CountTree {
    pub fn to_dump(&self) -> CountTreeDump {
        CountTreeDump {
            format: COUNT_TREE_FORMAT.into(),
            alphabet: self.alphabet.clone(),
            mode: self.mode,
            max_depth: self.max_depth,
            n_total: self.n_total,
            nodes: self
                .nodes()
                .into_iter()
                .map(|n| CountNodeRecord {
                    key: n.key.clone(),
                    n_occ: n.n_occ,
                    center_counts: n.center_counts.clone(),
                })
                .collect(),
        }
    }

    pub fn from_dump(dump: &CountTreeDump) -> Result<Self> {
        if dump.format != COUNT_TREE_FORMAT {
            return Err(PcnError::Model(format!("unsupported count tree format {:?}", dump.format)));
        }
        let k = dump.alphabet.size();
        let mut tree = CountTree::empty(dump.max_depth, dump.mode, dump.alphabet.clone());
        tree.n_total = dump.n_total;
        for rec in &dump.nodes {
            if rec.center_counts.len() != k || rec.center_counts.iter().sum::<u64>() != rec.n_occ {
                return Err(PcnError::Model(format!("inconsistent counts at {}", rec.key)));
            }
            rec.key.validate_alphabet(k)?;
            let mut node = &mut tree.root;
            for fk in rec.key.frames() {
                let CountNode { key, children, .. } = node;
                node = match children.entry(fk.clone()) {
                    std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
                    std::collections::btree_map::Entry::Vacant(e) => {
                        let ck = key.child(fk.clone())?;
                        e.insert(CountNode::empty(ck, k))
                    }
                };
            }
            node.n_occ = rec.n_occ;
            node.center_counts = rec.center_counts.clone();
        }
        Ok(tree)
    }
}
