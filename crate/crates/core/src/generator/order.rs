use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Hypothesis;
use crate::error::Result;
use crate::tokenizer::TokenIndex;

/// Slot order applied to every item's token tuple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderMode {
    Identity,
    Reverse,
    Random(u64),
}

impl OrderMode {
    /// `perm[j]` = original slot placed at position `j`.
    pub fn permutation(self, depth: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..depth).collect();
        match self {
            OrderMode::Identity => {}
            OrderMode::Reverse => p.reverse(),
            OrderMode::Random(seed) => p.shuffle(&mut ChaCha8Rng::seed_from_u64(seed)),
        }
        p
    }
}

/// Reorders the slots of every tuple by one shared permutation; level
/// vocabularies move with their slots.
pub fn apply_order_ablation(index: &TokenIndex, mode: OrderMode) -> Result<TokenIndex> {
    let perm = mode.permutation(index.depth());
    let vocab: Vec<usize> = perm.iter().map(|&j| index.vocab()[j]).collect();
    let entries = index
        .items()
        .iter()
        .map(|it| (it.item_id.clone(), perm.iter().map(|&j| it.tokens[j]).collect()))
        .collect();
    TokenIndex::new(entries, &vocab)
}

/// Grounds ranked tuples to items: tuples with no item are skipped, shared
/// tuples expand in ascending item id order, and each item keeps its
/// tuple's log-probability. At most `cutoff` items.
pub fn sequences_to_items(ranked: &[Hypothesis], index: &TokenIndex, cutoff: usize) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for h in ranked {
        let mut ids: Vec<&String> = index.items_for(&h.tokens).iter().collect();
        ids.sort();
        for id in ids {
            if out.len() == cutoff {
                return out;
            }
            out.push((id.clone(), h.log_prob));
        }
    }
    out
}
