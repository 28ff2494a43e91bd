//! Ready-made binary models used as simulation truths.

use crate::geometry::{ContextKey, FrameMode};
use crate::grid::Alphabet;
use crate::model::{Pcn, PcnNode};

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn binary_leaf(blacks: &[u32], p_black: f64) -> PcnNode {
    PcnNode::from_probs(
        ContextKey::binary_counts(blacks).expect("valid binary counts"),
        vec![1.0 - p_black, p_black],
    )
}

/// Variable-depth binary model with 57 leaves.
///
/// First frames with 0, 1, 2, 6, 7 or 8 black sites are leaves with
/// `P(black) = logistic(0.2 k - 0.8)`. First frames with 3, 4 or 5 black
/// sites expand over all 17 second-frame counts `m`, with
/// `P(black) = logistic(0.2 (k + m) - 2.4)`.
pub fn variable_depth_logistic() -> Pcn {
    let mut leaves = Vec::new();
    for k in 0..=8u32 {
        if (3..=5).contains(&k) {
            for m in 0..=16u32 {
                leaves.push(binary_leaf(&[k, m], logistic(0.2 * (k + m) as f64 - 2.4)));
            }
        } else {
            leaves.push(binary_leaf(&[k], logistic(0.2 * k as f64 - 0.8)));
        }
    }
    Pcn::new(Alphabet::binary(), FrameMode::Count, leaves, Vec::new()).expect("valid preset")
}

/// Complete depth-2 binary model: all 153 second-order contexts are
/// leaves with `P(black) = logistic(0.2 (k + m) - 2.4)`, `k` and `m` being
/// the black counts of the first and second frames.
pub fn full_depth2_logistic() -> Pcn {
    let mut leaves = Vec::new();
    for k in 0..=8u32 {
        for m in 0..=16u32 {
            leaves.push(binary_leaf(&[k, m], logistic(0.2 * (k + m) as f64 - 2.4)));
        }
    }
    Pcn::new(Alphabet::binary(), FrameMode::Count, leaves, Vec::new()).expect("valid preset")
}

/// Looks a preset up by its command-line name.
pub fn by_name(name: &str) -> Option<Pcn> {
    match name {
        "variable-depth" => Some(variable_depth_logistic()),
        "full-depth2" => Some(full_depth2_logistic()),
        _ => None,
    }
}

pub const PRESET_NAMES: &[&str] = &["variable-depth", "full-depth2"];
