//! Continuous item inputs for the tokenizer: hashed n-gram text embeddings
//! per hierarchy level and co-occurrence (PPMI) collaborative embeddings.

mod cf;
mod table;
mod text;

use serde::{Deserialize, Serialize};

pub use cf::{cooccurrence_ppmi, train_cf_embeddings, SparseSymmetric};
pub use table::EmbeddingTable;
pub use text::{embed_text, TextEmbedder};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturizerConfig {
    pub d_text: usize,
    pub d_cf: usize,
    /// Character n-gram lengths added on top of whole words.
    pub ngram_sizes: Vec<usize>,
    pub hash_buckets: usize,
    pub projection_seed: u64,
    /// Two positions co-occur when at most this far apart.
    pub cooccurrence_window: usize,
    pub svd_iterations: usize,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        Self {
            d_text: 64,
            d_cf: 64,
            ngram_sizes: vec![3, 4],
            hash_buckets: 4096,
            projection_seed: 17,
            cooccurrence_window: 5,
            svd_iterations: 60,
        }
    }
}

impl FeaturizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_text < 2 || self.d_cf < 2 {
            return Err(Error::Config("featurizer.d_text and featurizer.d_cf must be ≥ 2".into()));
        }
        if self.hash_buckets < self.d_text {
            return Err(Error::Config(format!(
                "featurizer.hash_buckets ({}) must be ≥ d_text ({})",
                self.hash_buckets, self.d_text
            )));
        }
        if self.ngram_sizes.contains(&0) {
            return Err(Error::Config("featurizer.ngram_sizes must be positive".into()));
        }
        if self.cooccurrence_window == 0 {
            return Err(Error::Config("featurizer.cooccurrence_window must be ≥ 1".into()));
        }
        Ok(())
    }
}
