//! Fitted or hand-specified PCN models: an irreducible tree of context
//! neighborhoods whose leaves carry conditional distributions of the center
//! symbol.
//!
//! Internal nodes may carry a distribution too. It is used only when a
//! configuration reaches an internal node through a child that the model
//! does not list, in which case the deepest such ancestor answers.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{PcnError, Result};
use crate::geometry::{ContextKey, FrameMode};
use crate::grid::Alphabet;

pub const PCN_FORMAT: &str = "pcn/1";

/// Row sums of a conditional distribution may deviate from 1 by this much.
const PROB_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcnNode {
    pub key: ContextKey,
    #[serde(default)]
    pub n_occ: u64,
    #[serde(default)]
    pub counts: Vec<u64>,
    pub probs: Vec<f64>,
}

impl PcnNode {
    /// Node with the maximum pseudo-likelihood estimate `count_a / n_occ`.
    pub fn from_counts(key: ContextKey, counts: Vec<u64>) -> Self {
        let n_occ: u64 = counts.iter().sum();
        let probs = counts.iter().map(|&c| c as f64 / n_occ as f64).collect();
        PcnNode { key, n_occ, counts, probs }
    }

    pub fn from_probs(key: ContextKey, probs: Vec<f64>) -> Self {
        PcnNode {
            key,
            n_occ: 0,
            counts: Vec::new(),
            probs,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pcn {
    alphabet: Alphabet,
    mode: FrameMode,
    leaves: Vec<PcnNode>,
    internal: Vec<PcnNode>,
}

#[derive(Serialize, Deserialize)]
struct PcnFile {
    format: String,
    alphabet: Alphabet,
    mode: FrameMode,
    depth: usize,
    leaves: Vec<PcnNode>,
    #[serde(default)]
    internal: Vec<PcnNode>,
}

/// Result of resolving a full configuration against a model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Resolved<'a> {
    Leaf(&'a PcnNode),
    /// No leaf matched; the deepest internal ancestor with a distribution.
    Fallback(&'a PcnNode),
}

impl<'a> Resolved<'a> {
    pub fn node(self) -> &'a PcnNode {
        match self {
            Resolved::Leaf(n) | Resolved::Fallback(n) => n,
        }
    }
}

impl Pcn {
    pub fn new(alphabet: Alphabet, mode: FrameMode, mut leaves: Vec<PcnNode>, mut internal: Vec<PcnNode>) -> Result<Self> {
        if leaves.is_empty() {
            return Err(PcnError::Model("a model needs at least one leaf".into()));
        }
        let k = alphabet.size();
        for n in leaves.iter().chain(&internal) {
            n.key.validate_alphabet(k)?;
            if let Some(m) = n.key.mode() {
                if m != mode {
                    return Err(PcnError::ModeMismatch(format!("{} in a {mode} model", n.key)));
                }
            }
            if n.probs.len() != k {
                return Err(PcnError::Model(format!("{} has {} probabilities for {k} symbols", n.key, n.probs.len())));
            }
            if n.probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(PcnError::Model(format!("{} has a probability outside [0, 1]", n.key)));
            }
            let sum: f64 = n.probs.iter().sum();
            if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
                return Err(PcnError::Model(format!("{} probabilities sum to {sum}", n.key)));
            }
            if !n.counts.is_empty() && n.counts.len() != k {
                return Err(PcnError::Model(format!("{} has {} counts for {k} symbols", n.key, n.counts.len())));
            }
        }
        let leaf_set: HashSet<&ContextKey> = leaves.iter().map(|n| &n.key).collect();
        if leaf_set.len() != leaves.len() {
            return Err(PcnError::Model("duplicate leaf keys".into()));
        }
        for n in &leaves {
            for j in 0..n.key.order() {
                let p = n.key.prefix(j);
                if leaf_set.contains(&p) {
                    return Err(PcnError::Model(format!("leaf {p} is a suffix of leaf {}", n.key)));
                }
            }
        }
        for n in &internal {
            if leaf_set.contains(&n.key) {
                return Err(PcnError::Model(format!("{} is both a leaf and an internal node", n.key)));
            }
        }
        leaves.sort_by(|a, b| a.key.cmp(&b.key));
        internal.sort_by(|a, b| a.key.cmp(&b.key));
        Ok(Pcn {
            alphabet,
            mode,
            leaves,
            internal,
        })
    }

    /// Memoryless model: a single root leaf.
    pub fn iid(alphabet: Alphabet, probs: Vec<f64>) -> Result<Self> {
        Pcn::new(alphabet, FrameMode::Count, vec![PcnNode::from_probs(ContextKey::root(), probs)], Vec::new())
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    /// Same model over renamed symbols.
    pub fn relabel(mut self, alphabet: Alphabet) -> Result<Self> {
        if alphabet.size() != self.alphabet.size() {
            return Err(PcnError::Alphabet(format!(
                "model has {} symbols, got {}",
                self.alphabet.size(),
                alphabet.size()
            )));
        }
        self.alphabet = alphabet;
        Ok(self)
    }

    pub fn mode(&self) -> FrameMode {
        self.mode
    }

    pub fn leaves(&self) -> &[PcnNode] {
        &self.leaves
    }

    pub fn internal(&self) -> &[PcnNode] {
        &self.internal
    }

    /// Highest leaf order, `d(T)`.
    pub fn depth(&self) -> usize {
        self.leaves.iter().map(|n| n.key.order()).max().unwrap_or(0)
    }

    pub fn leaf(&self, key: &ContextKey) -> Option<&PcnNode> {
        self.leaves
            .binary_search_by(|n| n.key.cmp(key))
            .ok()
            .map(|i| &self.leaves[i])
    }

    /// Keys of the internal nodes implied by the leaves (every proper
    /// prefix of a leaf).
    pub fn internal_keys(&self) -> BTreeSet<ContextKey> {
        let mut out = BTreeSet::new();
        for n in &self.leaves {
            for j in 0..n.key.order() {
                out.insert(n.key.prefix(j));
            }
        }
        out
    }

    pub fn leaf_keys(&self) -> BTreeSet<ContextKey> {
        self.leaves.iter().map(|n| n.key.clone()).collect()
    }

    /// Resolves a configuration of order at least `depth()` to the leaf
    /// that is its suffix, or to the deepest internal ancestor carrying a
    /// distribution.
    pub fn resolve(&self, config: &ContextKey) -> Result<Resolved<'_>> {
        let internal: HashMap<&ContextKey, &PcnNode> = self.internal.iter().map(|n| (&n.key, n)).collect();
        let mut fallback = None;
        for j in 0..=config.order() {
            let p = config.prefix(j);
            if let Some(leaf) = self.leaf(&p) {
                return Ok(Resolved::Leaf(leaf));
            }
            if let Some(n) = internal.get(&p) {
                fallback = Some(*n);
            }
        }
        fallback
            .map(Resolved::Fallback)
            .ok_or_else(|| PcnError::UncoveredContext(config.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        let file = PcnFile {
            format: PCN_FORMAT.into(),
            alphabet: self.alphabet.clone(),
            mode: self.mode,
            depth: self.depth(),
            leaves: self.leaves.clone(),
            internal: self.internal.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PcnFile = serde_json::from_str(text)?;
        if file.format != PCN_FORMAT {
            return Err(PcnError::Model(format!("unsupported model format {:?}", file.format)));
        }
        let pcn = Pcn::new(file.alphabet, file.mode, file.leaves, file.internal)?;
        if pcn.depth() != file.depth {
            return Err(PcnError::Model(format!(
                "declared depth {} but the leaves reach depth {}",
                file.depth,
                pcn.depth()
            )));
        }
        Ok(pcn)
    }

    /// Graphviz rendering, root at the top, leaves labelled with their key
    /// and conditional probabilities.
    pub fn to_dot(&self) -> String {
        let mut ids: HashMap<ContextKey, usize> = HashMap::new();
        let mut keys: BTreeSet<ContextKey> = self.internal_keys();
        keys.extend(self.leaf_keys());
        let mut out = String::from("digraph pcn {\n  rankdir=TB;\n  node [fontname=\"Helvetica\"];\n");
        for (i, k) in keys.iter().enumerate() {
            ids.insert(k.clone(), i);
            let label = match self.leaf(k) {
                Some(n) => {
                    let probs: Vec<String> = self
                        .alphabet
                        .symbols()
                        .iter()
                        .zip(&n.probs)
                        .map(|(s, p)| format!("{s}={p:.4}"))
                        .collect();
                    format!("{}\\n{}", dot_escape(&k.to_string()), probs.join(" "))
                }
                None => dot_escape(&k.to_string()),
            };
            let shape = if self.leaf(k).is_some() { "box" } else { "ellipse" };
            let _ = writeln!(out, "  n{i} [label=\"{label}\", shape={shape}];");
        }
        for k in &keys {
            if let Some(p) = k.parent() {
                let _ = writeln!(out, "  n{} -> n{};", ids[&p], ids[k]);
            }
        }
        out.push_str("}\n");
        out
    }
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(s: &str) -> ContextKey {
        s.parse().unwrap()
    }

    fn two_level() -> Pcn {
        let mut leaves = vec![PcnNode::from_probs(key("1:8,0"), vec![0.9, 0.1])];
        for b in 0..=16u32 {
            leaves.push(PcnNode::from_probs(
                ContextKey::binary_counts(&[1, b]).unwrap(),
                vec![0.5, 0.5],
            ));
        }
        let internal = vec![PcnNode::from_counts(key("1:7,1"), vec![3, 1])];
        Pcn::new(Alphabet::binary(), FrameMode::Count, leaves, internal).unwrap()
    }

    #[test]
    fn rejects_suffix_leaves() {
        let leaves = vec![
            PcnNode::from_probs(key("1:8,0"), vec![1.0, 0.0]),
            PcnNode::from_probs(key("1:8,0|2:16,0"), vec![1.0, 0.0]),
        ];
        assert!(Pcn::new(Alphabet::binary(), FrameMode::Count, leaves, vec![]).is_err());
    }

    #[test]
    fn rejects_bad_rows() {
        let leaves = vec![PcnNode::from_probs(ContextKey::root(), vec![0.7, 0.7])];
        assert!(Pcn::new(Alphabet::binary(), FrameMode::Count, leaves, vec![]).is_err());
        let leaves = vec![PcnNode::from_probs(ContextKey::root(), vec![1.0])];
        assert!(Pcn::new(Alphabet::binary(), FrameMode::Count, leaves, vec![]).is_err());
    }

    #[test]
    fn resolve_leaf_and_fallback() {
        let m = two_level();
        assert_eq!(m.depth(), 2);
        let r = m.resolve(&key("1:8,0|2:3,13")).unwrap();
        assert_eq!(r, Resolved::Leaf(m.leaf(&key("1:8,0")).unwrap()));
        let r = m.resolve(&key("1:7,1|2:10,6")).unwrap();
        assert!(matches!(r, Resolved::Leaf(_)));
        // first frame with two black sites is not covered at all
        assert_eq!(m.resolve(&key("1:6,2|2:16,0")).unwrap_err().code(), "UNCOVERED_CONTEXT");
    }

    #[test]
    fn json_round_trip() {
        let m = two_level();
        let back = Pcn::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn dot_lists_every_node_once() {
        let m = two_level();
        let dot = m.to_dot();
        assert!(dot.starts_with("digraph pcn {"));
        assert!(dot.trim_end().ends_with('}'));
        // root + 2 first-order nodes + 17 second-order leaves
        assert_eq!(dot.matches(" [label=").count(), 20);
        assert_eq!(dot.matches(" -> ").count(), 19);
    }
}
