//! Hierarchical vector-quantized item tokenizer.
//!
//! Levels `1..K−1` encode the item's text fields through one shared
//! encoder/decoder pair; level `K` encodes its collaborative embedding
//! through a separate pair. Every level owns a codebook, and an item's
//! token sequence is the nearest-code index at each level.

mod index;
mod input;
mod model;
mod train;

use serde::{Deserialize, Serialize};

pub use index::{analytics_csv, collision_rate, prefix_purity, utilization, TokenIndex, TokenizedItem};
pub use input::{build_tokenizer_input, TokenizerInput};
pub use model::{quantize, tokenizer_loss, tokenizer_loss_with_assignments, LevelSource, LossTerms, TokenizerModel};
pub use train::{initialize_tokenizer, tokenize_corpus, train_tokenizer, EpochStats, TrainedTokenizer};

use crate::error::{Error, Result};
use crate::numerics::AdamConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TokenizerConfig {
    /// `V_k` for every level, coarse to fine.
    pub codebook_sizes: Vec<usize>,
    pub code_dim: usize,
    pub hidden_dim: usize,
    /// Weight of the encoder-side commitment term.
    pub mu: f64,
    pub epochs: usize,
    pub optimizer: AdamConfig,
    pub seed: u64,
    pub reseed_dead_codes: bool,
    /// Std of the noise added to initial and reseeded codes, relative to the
    /// RMS of the encoder outputs they are copied from.
    pub init_noise: f64,
    /// Corpora up to this size train full-batch.
    pub max_full_batch: usize,
    pub batch_size: usize,
    /// Replace the collaborative level by a fourth text level
    /// (title + description).
    pub use_cf: bool,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            codebook_sizes: vec![256, 256, 512, 512],
            code_dim: 32,
            hidden_dim: 128,
            mu: 0.25,
            epochs: 200,
            optimizer: AdamConfig::default(),
            seed: 7,
            reseed_dead_codes: true,
            init_noise: 0.01,
            max_full_batch: 4096,
            batch_size: 1024,
            use_cf: true,
        }
    }
}

impl TokenizerConfig {
    pub fn depth(&self) -> usize {
        self.codebook_sizes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.codebook_sizes.len() < 2 {
            return Err(Error::Config("tokenizer.codebook_sizes needs at least two levels".into()));
        }
        if let Some(v) = self.codebook_sizes.iter().find(|&&v| v < 2) {
            return Err(Error::Config(format!("tokenizer.codebook_sizes entries must be ≥ 2, got {v}")));
        }
        if self.code_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config("tokenizer.code_dim and tokenizer.hidden_dim must be ≥ 1".into()));
        }
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(Error::Config("tokenizer.mu must be finite and ≥ 0".into()));
        }
        if !(self.init_noise.is_finite() && self.init_noise >= 0.0) {
            return Err(Error::Config("tokenizer.init_noise must be finite and ≥ 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("tokenizer.batch_size must be ≥ 1".into()));
        }
        Ok(())
    }
}
