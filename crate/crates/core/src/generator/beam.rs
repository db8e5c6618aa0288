use std::cmp::Ordering;

use super::GeneratorModel;
use crate::error::{Error, Result};
use crate::numerics::{log_softmax_in_place, AttentionCache, KvCache, MultiHeadAttention, Tensor2};

/// Incremental next-token distributions for one item's token tuple.
pub trait StepScorer {
    type State: Clone;

    fn vocab(&self) -> Vec<usize>;

    /// State before the first token, with log-probabilities over level 1.
    fn start(&self) -> Result<(Self::State, Vec<f64>)>;

    /// Appends `token` at `level` and returns the new state with
    /// log-probabilities over level `level + 1` (empty after the last level).
    fn advance(&self, state: &Self::State, level: usize, token: usize) -> Result<(Self::State, Vec<f64>)>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<usize>,
    pub log_prob: f64,
}

fn rank(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.log_prob.total_cmp(&a.log_prob).then_with(|| a.tokens.cmp(&b.tokens))
}

/// Level-constrained beam search: `K` expansion steps over each level's
/// vocabulary, keeping the best `width` partial tuples by accumulated
/// log-probability (ties: lexicographically smaller tuple first).
pub fn beam_search<S: StepScorer>(scorer: &S, width: usize) -> Result<Vec<Hypothesis>> {
    if width == 0 {
        return Err(Error::Config("beam width must be ≥ 1".into()));
    }
    let depth = scorer.vocab().len();
    let (root, first) = scorer.start()?;
    let mut beams: Vec<(Hypothesis, S::State, Vec<f64>)> = vec![(
        Hypothesis {
            tokens: Vec::new(),
            log_prob: 0.0,
        },
        root,
        first,
    )];
    for level in 0..depth {
        let mut cand: Vec<(Hypothesis, usize)> = Vec::new();
        for (parent, (h, _, lp)) in beams.iter().enumerate() {
            for (tok, &l) in lp.iter().enumerate() {
                let mut tokens = h.tokens.clone();
                tokens.push(tok);
                cand.push((
                    Hypothesis {
                        tokens,
                        log_prob: h.log_prob + l,
                    },
                    parent,
                ));
            }
        }
        cand.sort_by(|a, b| rank(&a.0, &b.0));
        cand.truncate(width);
        if level + 1 == depth {
            return Ok(cand.into_iter().map(|(h, _)| h).collect());
        }
        beams = cand
            .into_iter()
            .map(|(h, parent)| {
                let tok = *h.tokens.last().expect("just pushed");
                let (state, lp) = scorer.advance(&beams[parent].1, level, tok)?;
                Ok((h, state, lp))
            })
            .collect::<Result<_>>()?;
    }
    Ok(Vec::new())
}

/// Scores the next item after a fixed history with a [`GeneratorModel`],
/// reusing the history's keys and values across hypotheses.
pub struct ModelScorer<'a> {
    model: &'a GeneratorModel,
    history_slots: usize,
    prefix: Vec<KvCache>,
    first: Vec<f64>,
}

impl<'a> ModelScorer<'a> {
    /// `history` holds the flat tokens of whole items, oldest first.
    pub fn new(model: &'a GeneratorModel, history: &[usize]) -> Result<Self> {
        let k = model.depth();
        if history.is_empty() || !history.len().is_multiple_of(k) {
            return Err(Error::shape("beam search history", format!("non-empty whole blocks of {k}"), history.len()));
        }
        if history.len() / k > model.max_history() {
            return Err(Error::shape("beam search history items", format!("≤ {}", model.max_history()), history.len() / k));
        }
        let (logits, cache) = model.forward(history)?;
        let prefix = cache
            .block_caches()
            .iter()
            .map(|c| MultiHeadAttention::kv_from_cache(&c.attn as &AttentionCache))
            .collect();
        let first = log_probs(logits.last().expect("non-empty history"), model.temperature);
        Ok(Self {
            model,
            history_slots: history.len(),
            prefix,
            first,
        })
    }
}

fn log_probs(logits: &[f64], temperature: f64) -> Vec<f64> {
    let mut z: Vec<f64> = logits.iter().map(|v| v / temperature).collect();
    log_softmax_in_place(&mut z);
    z
}

impl StepScorer for ModelScorer<'_> {
    type State = Vec<KvCache>;

    fn vocab(&self) -> Vec<usize> {
        self.model.vocab()
    }

    fn start(&self) -> Result<(Self::State, Vec<f64>)> {
        Ok((vec![KvCache::default(); self.prefix.len()], self.first.clone()))
    }

    fn advance(&self, state: &Self::State, level: usize, token: usize) -> Result<(Self::State, Vec<f64>)> {
        let m = self.model;
        let slot = self.history_slots + level;
        let mut x = m.slot_embedding(slot, token);
        let mut next = state.clone();
        for (l, block) in m.blocks.iter().enumerate() {
            x = block.step(&x, &self.prefix[l], &mut next[l])?;
        }
        if level + 1 == m.depth() {
            return Ok((next, Vec::new()));
        }
        let d = x.len();
        let (h, _) = m.ln_f.forward(&Tensor2::from_vec(1, d, x)?)?;
        let logits = h.matmul(&m.heads[level + 1])?;
        Ok((next, log_probs(logits.data(), m.temperature)))
    }
}
