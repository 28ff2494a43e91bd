//! Model selection by the pseudo-Bayesian information criterion.
//!
//! For a candidate tree `T` the criterion is
//!
//! ```text
//! PIC(T) = -log MPL(T) + ((|A| - 1) |T| / 2) log n
//! ```
//!
//! where `log MPL(T) = Σ_leaves Σ_a N(c, a) log(N(c, a) / N(c))`. Each node
//! `c` of the counting tree gets a score
//!
//! ```text
//! log P̃(c) = -((|A| - 1) / 2) log n + Σ_a N(c, a) log(N(c, a) / N(c))
//! ```
//!
//! so that `-PIC(T) = Σ_leaves log P̃(c)`. Minimizing the PIC over every
//! feasible tree is then a bottom-up recursion: a node keeps the larger of
//! its own score and the sum of its children's best scores. Everything is
//! kept in the log domain with `0 log 0 = 0`.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counting::{self, CountNode, CountTree};
use crate::error::{PcnError, Result};
use crate::geometry::{ContextKey, FrameMode};
use crate::grid::{self, BoundaryPolicy, Grid};
use crate::model::{Pcn, PcnNode};

/// Enumeration limit for [`exhaustive_pic_oracle`].
pub const DEFAULT_ORACLE_BOUND: u64 = 10_000_000;

/// `Σ_a count_a log(count_a / n_occ)`, zero for an unobserved node.
pub fn log_mpl_term(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let c = c as f64;
            c * (c / n).ln()
        })
        .sum()
}

/// Per-leaf penalty `((|A| - 1) / 2) log n`.
pub fn leaf_penalty(n: u64, alphabet_size: usize) -> f64 {
    (alphabet_size as f64 - 1.0) / 2.0 * (n as f64).ln()
}

/// `log P̃` of a node; 0 (that is, `P̃ = 1`) when the node was never observed.
pub fn log_p_tilde(node: &CountNode, n_total: u64, alphabet_size: usize) -> f64 {
    if node.n_occ == 0 {
        return 0.0;
    }
    log_mpl_term(&node.center_counts) - leaf_penalty(n_total, alphabet_size)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicReport {
    pub tree_pic: f64,
    pub tree_log_mpl: f64,
    pub leaf_count: usize,
    pub penalty: f64,
    /// The `n` inside the penalty's logarithm.
    pub penalty_n: u64,
}

impl PicReport {
    fn new(log_mpl: f64, leaf_count: usize, penalty_n: u64, alphabet_size: usize) -> Self {
        let penalty = leaf_count as f64 * leaf_penalty(penalty_n, alphabet_size);
        PicReport {
            tree_pic: -log_mpl + penalty,
            tree_log_mpl: log_mpl,
            leaf_count,
            penalty,
            penalty_n,
        }
    }
}

/// Checks that `candidate` is a feasible tree for `tree` and returns its
/// leaves in depth-first order.
fn candidate_nodes<'a>(tree: &'a CountTree, candidate: &[ContextKey]) -> Result<Vec<&'a CountNode>> {
    let set: HashSet<&ContextKey> = candidate.iter().collect();
    if set.len() != candidate.len() {
        return Err(PcnError::Candidate("duplicate keys".into()));
    }
    if candidate.is_empty() {
        return Err(PcnError::Candidate("no leaves".into()));
    }
    for k in candidate {
        if let (Some(m), true) = (k.mode(), k.order() > 0) {
            if m != tree.mode {
                return Err(PcnError::ModeMismatch(format!("{k} against a {} tree", tree.mode)));
            }
        }
        match counting::node_lookup(tree, k) {
            Some(n) if n.n_occ > 0 => {}
            _ => return Err(PcnError::Candidate(format!("{k} was not observed"))),
        }
    }

    fn walk<'a>(
        node: &'a CountNode,
        covering: Option<&'a ContextKey>,
        set: &HashSet<&ContextKey>,
        max_depth: usize,
        out: &mut Vec<&'a CountNode>,
    ) -> Result<()> {
        let mut covering = covering;
        if set.contains(&node.key) {
            if let Some(anc) = covering {
                return Err(PcnError::Candidate(format!("{anc} is a suffix of {}", node.key)));
            }
            covering = Some(&node.key);
            out.push(node);
        }
        if node.children.is_empty() || node.order() == max_depth {
            if covering.is_none() {
                return Err(PcnError::Candidate(format!("observed context {} is not covered", node.key)));
            }
            return Ok(());
        }
        for c in node.children.values() {
            walk(c, covering, set, max_depth, out)?;
        }
        Ok(())
    }

    let mut out = Vec::with_capacity(candidate.len());
    walk(&tree.root, None, &set, tree.max_depth, &mut out)?;
    Ok(out)
}

/// Maximum log pseudo-likelihood of a candidate tree.
pub fn log_mpl(tree: &CountTree, candidate: &[ContextKey]) -> Result<f64> {
    Ok(candidate_nodes(tree, candidate)?
        .iter()
        .map(|n| log_mpl_term(&n.center_counts))
        .sum())
}

/// PIC of a candidate tree with `n = tree.n_total`.
pub fn pic(tree: &CountTree, candidate: &[ContextKey]) -> Result<PicReport> {
    pic_with_n(tree, candidate, tree.n_total)
}

pub fn pic_with_n(tree: &CountTree, candidate: &[ContextKey], penalty_n: u64) -> Result<PicReport> {
    let lm = log_mpl(tree, candidate)?;
    Ok(PicReport::new(lm, candidate.len(), penalty_n, tree.alphabet_size()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredNode {
    pub p_tilde: f64,
    pub v: f64,
    /// True when the children's combined value beats the node's own score.
    pub chi: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scores {
    nodes: HashMap<ContextKey, ScoredNode>,
    pub penalty_n: u64,
}

impl Scores {
    pub fn get(&self, key: &ContextKey) -> Option<&ScoredNode> {
        self.nodes.get(key)
    }

    pub fn root(&self) -> &ScoredNode {
        &self.nodes[&ContextKey::root()]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ContextKey, &ScoredNode)> {
        self.nodes.iter()
    }
}

fn score_subtree(
    node: &CountNode,
    max_depth: usize,
    n: u64,
    k: usize,
    out: &mut HashMap<ContextKey, ScoredNode>,
) -> f64 {
    let p_tilde = log_p_tilde(node, n, k);
    let scored = if node.order() >= max_depth || node.children.is_empty() {
        ScoredNode {
            p_tilde,
            v: p_tilde,
            chi: false,
        }
    } else {
        let s: f64 = node
            .children
            .values()
            .map(|c| score_subtree(c, max_depth, n, k, out))
            .sum();
        // ties keep the parent
        if p_tilde >= s {
            ScoredNode { p_tilde, v: p_tilde, chi: false }
        } else {
            ScoredNode { p_tilde, v: s, chi: true }
        }
    };
    out.insert(node.key.clone(), scored);
    scored.v
}

/// Bottom-up `V` values and expand indicators for every node, with
/// `n = tree.n_total`.
pub fn compute_scores(tree: &CountTree) -> Scores {
    compute_scores_with_n(tree, tree.n_total)
}

pub fn compute_scores_with_n(tree: &CountTree, penalty_n: u64) -> Scores {
    let k = tree.alphabet_size();
    let d = tree.max_depth;
    let root = &tree.root;
    // first-order subtrees are independent
    let parts: Vec<(f64, HashMap<ContextKey, ScoredNode>)> = root
        .children
        .values()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|c| {
            let mut m = HashMap::new();
            let v = score_subtree(c, d, penalty_n, k, &mut m);
            (v, m)
        })
        .collect();
    let mut nodes = HashMap::new();
    let mut s = 0.0;
    for (v, m) in parts {
        s += v;
        nodes.extend(m);
    }
    let p_tilde = log_p_tilde(root, penalty_n, k);
    let scored = if d == 0 || root.children.is_empty() || p_tilde >= s {
        ScoredNode { p_tilde, v: p_tilde, chi: false }
    } else {
        ScoredNode { p_tilde, v: s, chi: true }
    };
    nodes.insert(ContextKey::root(), scored);
    Scores { nodes, penalty_n }
}

/// Top-down pruning: descend through nodes whose children win, stop at the
/// first node that beats its children. Leaves get `Q̂(a|c) = N(c, a) / N(c)`.
pub fn prune(tree: &CountTree, scores: &Scores) -> Result<Pcn> {
    fn descend(node: &CountNode, scores: &Scores, leaves: &mut Vec<PcnNode>, internal: &mut Vec<PcnNode>) -> Result<()> {
        let s = scores
            .get(&node.key)
            .ok_or_else(|| PcnError::Config(format!("no score for {}", node.key)))?;
        if s.chi {
            internal.push(PcnNode::from_counts(node.key.clone(), node.center_counts.clone()));
            for c in node.children.values() {
                descend(c, scores, leaves, internal)?;
            }
        } else {
            leaves.push(PcnNode::from_counts(node.key.clone(), node.center_counts.clone()));
        }
        Ok(())
    }
    if tree.root.n_occ == 0 {
        return Err(PcnError::EmptySample);
    }
    let mut leaves = Vec::new();
    let mut internal = Vec::new();
    descend(&tree.root, scores, &mut leaves, &mut internal)?;
    Pcn::new(tree.alphabet.clone(), tree.mode, leaves, internal)
}

/// Which `n` enters the penalty term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltySize {
    /// Number of centers that were actually counted.
    #[default]
    EvaluatedCenters,
    /// Number of unmasked sites of the sample region.
    LatticeSites,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Maximum neighborhood order `D`; `None` uses [`default_depth`].
    pub depth: Option<usize>,
    pub mode: FrameMode,
    pub policy: BoundaryPolicy,
    pub penalty: PenaltySize,
    /// Counting shards; results do not depend on this.
    pub workers: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            depth: None,
            mode: FrameMode::Count,
            policy: BoundaryPolicy::InteriorOnly,
            penalty: PenaltySize::EvaluatedCenters,
            workers: 1,
        }
    }
}

impl FitConfig {
    pub fn with_depth(depth: usize) -> Self {
        FitConfig {
            depth: Some(depth),
            ..FitConfig::default()
        }
    }
}

/// `max(1, floor((ln n)^(1/4)))`.
pub fn default_depth(n: u64) -> usize {
    if n < 2 {
        return 1;
    }
    ((n as f64).ln().powf(0.25).floor() as usize).max(1)
}

/// Unmasked sites in the region the sample covers (the core for buffered
/// grids).
pub fn sample_sites(grid: &Grid, policy: BoundaryPolicy) -> u64 {
    let (r0, r1, c0, c1) = match policy {
        BoundaryPolicy::Buffer { margin } if grid.rows() > 2 * margin && grid.cols() > 2 * margin => {
            (margin, grid.rows() - margin, margin, grid.cols() - margin)
        }
        BoundaryPolicy::Buffer { .. } => return 0,
        _ => (0, grid.rows(), 0, grid.cols()),
    };
    let mut n = 0;
    for r in r0..r1 {
        for c in c0..c1 {
            if !grid.is_masked(r, c) {
                n += 1;
            }
        }
    }
    n
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub pcn: Pcn,
    pub report: PicReport,
    pub counts: CountTree,
    pub depth: usize,
}

/// Counts, scores and prunes in one go.
pub fn fit(grid: &Grid, config: &FitConfig) -> Result<(Pcn, PicReport)> {
    let o = fit_detailed(grid, config)?;
    Ok((o.pcn, o.report))
}

pub fn fit_detailed(grid: &Grid, config: &FitConfig) -> Result<FitOutcome> {
    let sites = sample_sites(grid, config.policy);
    let depth = match config.depth {
        Some(0) => return Err(PcnError::Config("depth must be at least 1".into())),
        Some(d) => d,
        None => default_depth(sites),
    };
    if grid::valid_centers(grid, depth, config.policy).is_empty() {
        return Err(PcnError::EmptySample);
    }
    let counts = counting::build_count_tree_sharded(grid, depth, config.mode, config.policy, config.workers)?;
    fit_counts(counts, config.penalty, sites)
}

/// Scores and prunes an existing counting tree.
pub fn fit_counts(counts: CountTree, penalty: PenaltySize, sample_sites: u64) -> Result<FitOutcome> {
    let penalty_n = match penalty {
        PenaltySize::EvaluatedCenters => counts.n_total,
        PenaltySize::LatticeSites => sample_sites.max(1),
    };
    let scores = compute_scores_with_n(&counts, penalty_n);
    let pcn = prune(&counts, &scores)?;
    let keys: Vec<ContextKey> = pcn.leaves().iter().map(|n| n.key.clone()).collect();
    let report = pic_with_n(&counts, &keys, penalty_n)?;
    let depth = counts.max_depth;
    Ok(FitOutcome { pcn, report, counts, depth })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub leaves: Vec<ContextKey>,
    pub report: PicReport,
    /// Smallest PIC among all other candidates, if any exist.
    pub runner_up_pic: Option<f64>,
    pub candidates: u64,
}

fn candidate_count(node: &CountNode, max_depth: usize) -> u128 {
    if node.order() >= max_depth || node.children.is_empty() {
        return 1;
    }
    let prod = node
        .children
        .values()
        .fold(1u128, |acc, c| acc.saturating_mul(candidate_count(c, max_depth)));
    prod.saturating_add(1)
}

fn candidate_count_f64(node: &CountNode, max_depth: usize) -> f64 {
    if node.order() >= max_depth || node.children.is_empty() {
        return 1.0;
    }
    node.children
        .values()
        .map(|c| candidate_count_f64(c, max_depth))
        .product::<f64>()
        + 1.0
}

/// Number of feasible trees for a counting tree, saturating.
pub fn feasible_tree_count(tree: &CountTree) -> u128 {
    candidate_count(&tree.root, tree.max_depth)
}

/// Brute-force PIC minimization over every feasible tree, scoring each
/// candidate directly from its leaf counts.
pub fn exhaustive_pic_oracle(tree: &CountTree, bound: u64) -> Result<OracleResult> {
    let total = feasible_tree_count(tree);
    if total > bound as u128 {
        let est = if total == u128::MAX {
            format!("{:.3e}", candidate_count_f64(&tree.root, tree.max_depth))
        } else {
            total.to_string()
        };
        return Err(PcnError::TooLarge { estimate: est, bound });
    }
    if tree.root.n_occ == 0 {
        return Err(PcnError::EmptySample);
    }
    let k = tree.alphabet_size();
    let n = tree.n_total;
    let per_leaf = leaf_penalty(n, k);

    struct Best {
        pic: f64,
        log_mpl: f64,
        leaves: Vec<ContextKey>,
        runner_up: Option<f64>,
        seen: u64,
    }

    fn enumerate<'a>(
        pending: &mut Vec<&'a CountNode>,
        chosen: &mut Vec<&'a CountNode>,
        max_depth: usize,
        visit: &mut dyn FnMut(&[&'a CountNode]),
    ) {
        let Some(node) = pending.pop() else {
            visit(chosen);
            return;
        };
        chosen.push(node);
        enumerate(pending, chosen, max_depth, visit);
        chosen.pop();
        if node.order() < max_depth && !node.children.is_empty() {
            let mark = pending.len();
            pending.extend(node.children.values().rev());
            enumerate(pending, chosen, max_depth, visit);
            pending.truncate(mark);
        }
        pending.push(node);
    }

    let mut best = Best {
        pic: f64::INFINITY,
        log_mpl: 0.0,
        leaves: Vec::new(),
        runner_up: None,
        seen: 0,
    };
    let mut visit = |leaves: &[&CountNode]| {
        let lm: f64 = leaves.iter().map(|n| log_mpl_term(&n.center_counts)).sum();
        let value = -lm + per_leaf * leaves.len() as f64;
        best.seen += 1;
        if value < best.pic {
            if best.pic.is_finite() {
                best.runner_up = Some(best.runner_up.map_or(best.pic, |r| r.min(best.pic)));
            }
            best.pic = value;
            best.log_mpl = lm;
            best.leaves = leaves.iter().map(|n| n.key.clone()).collect();
        } else {
            best.runner_up = Some(best.runner_up.map_or(value, |r| r.min(value)));
        }
    };
    let mut pending = vec![&tree.root];
    let mut chosen = Vec::new();
    enumerate(&mut pending, &mut chosen, tree.max_depth, &mut visit);

    let mut leaves = best.leaves;
    leaves.sort();
    Ok(OracleResult {
        report: PicReport::new(best.log_mpl, leaves.len(), n, k),
        leaves,
        runner_up_pic: best.runner_up,
        candidates: best.seen,
    })
}
