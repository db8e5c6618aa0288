use std::collections::HashMap;

use serde::Serialize;

use crate::corpus::{Corpus, HeldOut};

/// Test users whose target item is rare as a sequence-final item.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColdSplit {
    pub warm: Vec<String>,
    pub cold: Vec<String>,
    /// Items whose final-position count is ≤ this are cold.
    pub threshold: usize,
    pub cold_items: Vec<String>,
}

/// Counts, for every corpus item, how many interaction sequences end with
/// it; the threshold is the 2nd percentile (nearest rank) of those counts
/// over all items, and items at or below it are cold.
pub fn make_cold_split(corpus: &Corpus, test: &[HeldOut]) -> ColdSplit {
    let mut freq: HashMap<&str, usize> = corpus.items.iter().map(|i| (i.item_id.as_str(), 0)).collect();
    for log in &corpus.logs {
        if let Some(last) = log.item_ids.last() {
            *freq.entry(last.as_str()).or_default() += 1;
        }
    }
    let mut counts: Vec<usize> = freq.values().copied().collect();
    counts.sort_unstable();
    let threshold = if counts.is_empty() {
        0
    } else {
        let rank = ((0.02 * counts.len() as f64).ceil() as usize).max(1);
        counts[rank - 1]
    };
    let mut cold_items: Vec<String> = freq
        .iter()
        .filter(|(_, &c)| c <= threshold)
        .map(|(id, _)| id.to_string())
        .collect();
    cold_items.sort();
    let (mut warm, mut cold) = (Vec::new(), Vec::new());
    for h in test {
        let f = freq.get(h.target.as_str()).copied().unwrap_or(0);
        if f <= threshold {
            cold.push(h.user_id.clone());
        } else {
            warm.push(h.user_id.clone());
        }
    }
    ColdSplit {
        warm,
        cold,
        threshold,
        cold_items,
    }
}
