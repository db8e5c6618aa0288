use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn rank_of(ranked: &[String], target: &str) -> Option<usize> {
    ranked.iter().position(|r| r == target).map(|p| p + 1)
}

/// 1 if `target` is among the first `k` entries, else 0.
pub fn recall_at_k(ranked: &[String], target: &str, k: usize) -> f64 {
    match rank_of(ranked, target) {
        Some(r) if r <= k => 1.0,
        _ => 0.0,
    }
}

/// `1 / log2(1 + rank)` if `target` is within the first `k`, else 0.
pub fn ndcg_at_k(ranked: &[String], target: &str, k: usize) -> f64 {
    match rank_of(ranked, target) {
        Some(r) if r <= k => 1.0 / ((1 + r) as f64).log2(),
        _ => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub recall_at_5: f64,
    pub recall_at_10: f64,
    pub ndcg_at_5: f64,
    pub ndcg_at_10: f64,
    pub users: usize,
    pub config_fingerprint: String,
    pub seed: u64,
}

impl MetricReport {
    /// Averages over `(ranking, target)` pairs; all zeros when empty.
    pub fn from_rankings<'a, I>(rankings: I, config_fingerprint: &str, seed: u64) -> Self
    where
        I: IntoIterator<Item = (&'a [String], &'a str)>,
    {
        let mut sums = [0.0; 4];
        let mut users = 0;
        for (ranked, target) in rankings {
            sums[0] += recall_at_k(ranked, target, 5);
            sums[1] += recall_at_k(ranked, target, 10);
            sums[2] += ndcg_at_k(ranked, target, 5);
            sums[3] += ndcg_at_k(ranked, target, 10);
            users += 1;
        }
        let n = users.max(1) as f64;
        Self {
            recall_at_5: sums[0] / n,
            recall_at_10: sums[1] / n,
            ndcg_at_5: sums[2] / n,
            ndcg_at_10: sums[3] / n,
            users,
            config_fingerprint: config_fingerprint.to_string(),
            seed,
        }
    }

    /// `(name, value)` in the fixed report order R@5, R@10, N@5, N@10.
    pub fn metrics(&self) -> [(&'static str, f64); 4] {
        [
            ("recall@5", self.recall_at_5),
            ("recall@10", self.recall_at_10),
            ("ndcg@5", self.ndcg_at_5),
            ("ndcg@10", self.ndcg_at_10),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.metrics().iter().all(|(_, v)| (0.0..=1.0).contains(v))
            && self.recall_at_5 <= self.recall_at_10
            && self.ndcg_at_5 <= self.ndcg_at_10;
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("inconsistent metric report {self:?}")))
        }
    }
}
