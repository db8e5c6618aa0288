use super::LevelSource;
use crate::corpus::{build_hierarchy, ItemRecord, SEMANTIC_LEVELS};
use crate::error::{Error, Result};
use crate::featurize::{EmbeddingTable, FeaturizerConfig, TextEmbedder};
use crate::numerics::Tensor2;

/// Per-level continuous inputs for a list of items, rows aligned with `ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizerInput {
    pub ids: Vec<String>,
    pub levels: Vec<Tensor2>,
    pub sources: Vec<LevelSource>,
}

impl TokenizerInput {
    pub fn new(ids: Vec<String>, levels: Vec<Tensor2>, sources: Vec<LevelSource>) -> Result<Self> {
        if levels.len() != sources.len() || levels.is_empty() {
            return Err(Error::shape("tokenizer input levels", sources.len(), levels.len()));
        }
        for (k, l) in levels.iter().enumerate() {
            if l.rows() != ids.len() {
                return Err(Error::shape(format!("tokenizer input level {}", k + 1), ids.len(), l.rows()));
            }
            if !l.is_finite() {
                return Err(Error::NonFinite(format!("tokenizer input level {}", k + 1)));
            }
        }
        let cf: Vec<usize> = (0..sources.len()).filter(|&k| sources[k] == LevelSource::Collaborative).collect();
        if cf.len() > 1 || cf.first().is_some_and(|&k| k + 1 != sources.len()) {
            return Err(Error::Config("only the last tokenizer level may be collaborative".into()));
        }
        let sem_dims: Vec<usize> = (0..levels.len())
            .filter(|&k| sources[k] == LevelSource::Semantic)
            .map(|k| levels[k].cols())
            .collect();
        if sem_dims.windows(2).any(|w| w[0] != w[1]) {
            return Err(Error::Config(format!("semantic levels must share one dimension, got {sem_dims:?}")));
        }
        Ok(Self { ids, levels, sources })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Rows `idx` of every level.
    pub fn select(&self, idx: &[usize]) -> Vec<Tensor2> {
        self.levels.iter().map(|l| l.gather_rows(idx)).collect()
    }
}

/// Text embeddings for category, title and description, followed either by
/// the collaborative embedding (`cf = Some`, zero for items missing from
/// the table) or by a fourth text level embedding title and description
/// together.
pub fn build_tokenizer_input(items: &[ItemRecord], cf: Option<&EmbeddingTable>, config: &FeaturizerConfig) -> Result<TokenizerInput> {
    let embedder = TextEmbedder::new(config)?;
    let depth = SEMANTIC_LEVELS + 1;
    let n = items.len();
    let mut levels: Vec<Tensor2> = (0..SEMANTIC_LEVELS).map(|_| Tensor2::zeros(n, embedder.dim())).collect();
    let ids: Vec<String> = items.iter().map(|i| i.item_id.clone()).collect();
    let mut last = match cf {
        Some(table) => table.lookup_or_zero(&ids),
        None => Tensor2::zeros(n, embedder.dim()),
    };
    for (i, item) in items.iter().enumerate() {
        let h = build_hierarchy(item, depth)?;
        for (k, text) in h.levels.iter().enumerate() {
            levels[k].row_mut(i).copy_from_slice(&embedder.embed(text, k + 1));
        }
        if cf.is_none() {
            let text = format!("{} {}", h.levels[1], h.levels[2]);
            last.row_mut(i).copy_from_slice(&embedder.embed(&text, depth));
        }
    }
    levels.push(last);
    let mut sources = vec![LevelSource::Semantic; SEMANTIC_LEVELS];
    sources.push(if cf.is_some() {
        LevelSource::Collaborative
    } else {
        LevelSource::Semantic
    });
    TokenizerInput::new(ids, levels, sources)
}
