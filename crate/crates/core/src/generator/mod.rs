//! Next-item generation over item token sequences: a small decoder-only
//! transformer with per-level input tables and output heads, trained with a
//! temperature cross-entropy per level and decoded by level-constrained beam
//! search.

mod beam;
mod loss;
mod model;
mod order;
mod train;

use serde::{Deserialize, Serialize};

pub use beam::{beam_search, Hypothesis, ModelScorer, StepScorer};
pub use loss::{rank_loss, rank_loss_with_grad};
pub use model::{ForwardCache, GeneratorModel};
pub use order::{apply_order_ablation, sequences_to_items, OrderMode};
pub use train::{
    mean_rank_loss, recommend, training_sequences, validation_sequences, EpochRecord, TrainSequence, TrainedGenerator,
    train_generator,
};

use crate::corpus::MAX_HISTORY;
use crate::error::{Error, Result};
use crate::numerics::AdamConfig;

/// How the retained checkpoint is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointSelection {
    /// Lowest mean validation rank loss.
    ValidationLoss,
    /// Highest validation NDCG@10 under beam search.
    ValidationNdcg,
    /// Keep the last epoch.
    Last,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    /// `T_max`: most recent history items fed to the model.
    pub max_history: usize,
    pub temperature: f64,
    pub optimizer: AdamConfig,
    pub epochs: usize,
    /// Training sequences per update.
    pub batch_size: usize,
    pub beam_width: usize,
    pub seed: u64,
    pub init_std: f64,
    pub use_level_embedding: bool,
    pub use_position_embedding: bool,
    pub selection: CheckpointSelection,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            n_layers: 2,
            n_heads: 2,
            d_ff: 128,
            max_history: MAX_HISTORY,
            temperature: 1.0,
            optimizer: AdamConfig::default(),
            epochs: 20,
            batch_size: 32,
            beam_width: 20,
            seed: 11,
            init_std: 0.1,
            use_level_embedding: true,
            use_position_embedding: true,
            selection: CheckpointSelection::ValidationLoss,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "generator.d_model ({}) must be a positive multiple of generator.n_heads ({})",
                self.d_model, self.n_heads
            )));
        }
        if self.d_ff == 0 || self.max_history == 0 {
            return Err(Error::Config("generator.d_ff and generator.max_history must be ≥ 1".into()));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::Config(format!("generator.temperature must be > 0, got {}", self.temperature)));
        }
        if self.beam_width == 0 || self.batch_size == 0 {
            return Err(Error::Config("generator.beam_width and generator.batch_size must be ≥ 1".into()));
        }
        if !(self.init_std.is_finite() && self.init_std > 0.0) {
            return Err(Error::Config("generator.init_std must be > 0".into()));
        }
        Ok(())
    }
}
