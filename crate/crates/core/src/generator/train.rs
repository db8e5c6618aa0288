use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{beam_search, rank_loss_with_grad, sequences_to_items, CheckpointSelection, GeneratorConfig, GeneratorModel, ModelScorer};
use crate::corpus::{DatasetSplit, HeldOut, InteractionLog};
use crate::error::{Error, Result};
use crate::eval::ndcg_at_k;
use crate::numerics::{Adam, Params};
use crate::tokenizer::TokenIndex;

/// Flat tokens of consecutive items; blocks from item `target_from` on are
/// prediction targets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainSequence {
    pub tokens: Vec<usize>,
    pub n_items: usize,
    pub target_from: usize,
}

fn flatten(items: &[String], index: &TokenIndex) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(items.len() * index.depth());
    for id in items {
        out.extend_from_slice(index.tokens_of(id)?);
    }
    Ok(out)
}

/// Windows of `max_history + 1` items with stride `max_history`, so every
/// item after a sequence's first is predicted exactly once, from at most
/// `max_history` preceding items.
pub fn training_sequences(train: &[InteractionLog], index: &TokenIndex, max_history: usize) -> Result<Vec<TrainSequence>> {
    let mut out = Vec::new();
    for log in train {
        let n = log.item_ids.len();
        let mut start = 0;
        while start + 1 < n {
            let end = (start + max_history + 1).min(n);
            let items = &log.item_ids[start..end];
            out.push(TrainSequence {
                tokens: flatten(items, index)?,
                n_items: items.len(),
                target_from: 1,
            });
            start += max_history;
        }
    }
    Ok(out)
}

/// History (last `max_history` items) followed by the held-out target.
pub fn validation_sequences(held: &[HeldOut], index: &TokenIndex, max_history: usize) -> Result<Vec<TrainSequence>> {
    held.iter()
        .map(|h| {
            let hist = &h.history[h.history.len().saturating_sub(max_history)..];
            let mut items = hist.to_vec();
            items.push(h.target.clone());
            Ok(TrainSequence {
                tokens: flatten(&items, index)?,
                n_items: items.len(),
                target_from: items.len() - 1,
            })
        })
        .collect()
}

/// Summed rank loss over the target blocks of one sequence, the number of
/// blocks, and the gradient when requested.
fn sequence_loss(model: &GeneratorModel, seq: &TrainSequence, with_grad: bool) -> Result<(f64, usize, Option<GeneratorModel>)> {
    let k = model.depth();
    let (logits, cache) = model.forward(&seq.tokens)?;
    let mut dlogits = vec![Vec::new(); seq.tokens.len()];
    let mut total = 0.0;
    let mut blocks = 0;
    for j in seq.target_from.max(1)..seq.n_items {
        let rows = j * k - 1..j * k + k - 1;
        let sel: Vec<Vec<f64>> = rows.clone().map(|r| logits[r].clone()).collect();
        let (l, g) = rank_loss_with_grad(&sel, &seq.tokens[j * k..(j + 1) * k], model.temperature)?;
        total += l;
        blocks += 1;
        if with_grad {
            for (r, gr) in rows.zip(g) {
                dlogits[r] = gr;
            }
        }
    }
    let grads = if with_grad && blocks > 0 {
        Some(model.backward(&cache, &dlogits)?.0)
    } else {
        None
    };
    Ok((total, blocks, grads))
}

/// Mean rank loss per target block.
pub fn mean_rank_loss(model: &GeneratorModel, seqs: &[TrainSequence]) -> Result<f64> {
    let parts = seqs
        .par_iter()
        .map(|s| sequence_loss(model, s, false).map(|(l, b, _)| (l, b)))
        .collect::<Result<Vec<_>>>()?;
    let (l, b) = parts.iter().fold((0.0, 0usize), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    Ok(if b == 0 { 0.0 } else { l / b as f64 })
}

/// Top `cutoff` items for the next interaction after `history`.
pub fn recommend(model: &GeneratorModel, history: &[String], index: &TokenIndex, beam_width: usize, cutoff: usize) -> Result<Vec<(String, f64)>> {
    let hist = &history[history.len().saturating_sub(model.max_history())..];
    let tokens = flatten(hist, index)?;
    let scorer = ModelScorer::new(model, &tokens)?;
    let ranked = beam_search(&scorer, beam_width)?;
    Ok(sequences_to_items(&ranked, index, cutoff))
}

fn validation_ndcg(model: &GeneratorModel, held: &[HeldOut], index: &TokenIndex, beam_width: usize) -> Result<f64> {
    if held.is_empty() {
        return Ok(0.0);
    }
    let scores = held
        .par_iter()
        .map(|h| {
            let recs = recommend(model, &h.history, index, beam_width, 10)?;
            let ids: Vec<String> = recs.into_iter().map(|(id, _)| id).collect();
            Ok(ndcg_at_k(&ids, &h.target, 10))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(scores.iter().sum::<f64>() / held.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
    pub valid_ndcg: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainedGenerator {
    pub model: GeneratorModel,
    pub curve: Vec<EpochRecord>,
    /// Epoch of the retained checkpoint, 0 for the initial model.
    pub best_epoch: usize,
}

/// Teacher-forced training on every next-item block of the training
/// sequences, one Adam update per `batch_size` sequences, loss averaged
/// over blocks. The checkpoint kept is chosen by `config.selection`.
pub fn train_generator(mut model: GeneratorModel, split: &DatasetSplit, index: &TokenIndex, config: &GeneratorConfig) -> Result<TrainedGenerator> {
    config.validate()?;
    if model.vocab() != index.vocab() {
        return Err(Error::shape("generator vocabulary", format!("{:?}", index.vocab()), format!("{:?}", model.vocab())));
    }
    let max_history = model.max_history();
    let train = training_sequences(&split.train, index, max_history)?;
    let valid = validation_sequences(&split.valid, index, max_history)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut opt = Adam::new(config.optimizer, &model.tensors());
    let mut curve = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, GeneratorModel)> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let (mut epoch_loss, mut epoch_blocks) = (0.0, 0usize);
        for batch in order.chunks(config.batch_size) {
            let parts = batch
                .par_iter()
                .map(|&i| sequence_loss(&model, &train[i], true))
                .collect::<Result<Vec<_>>>()?;
            let blocks: usize = parts.iter().map(|p| p.1).sum();
            if blocks == 0 {
                continue;
            }
            let mut grads = model.zeros_like();
            for (l, _, g) in &parts {
                epoch_loss += l;
                if let Some(g) = g {
                    grads.accumulate(g, 1.0 / blocks as f64);
                }
            }
            epoch_blocks += blocks;
            opt.step(model.tensors_mut(), &grads.tensors())?;
        }
        let train_loss = if epoch_blocks == 0 { 0.0 } else { epoch_loss / epoch_blocks as f64 };
        if !train_loss.is_finite() {
            return Err(Error::NonFinite(format!("generator loss at epoch {epoch}")));
        }
        let mut record = EpochRecord {
            epoch,
            train_loss,
            valid_loss: None,
            valid_ndcg: None,
        };
        let score = match config.selection {
            CheckpointSelection::Last => None,
            _ if valid.is_empty() => None,
            CheckpointSelection::ValidationLoss => {
                let v = mean_rank_loss(&model, &valid)?;
                record.valid_loss = Some(v);
                Some(-v)
            }
            CheckpointSelection::ValidationNdcg => {
                let v = validation_ndcg(&model, &split.valid, index, config.beam_width)?;
                record.valid_ndcg = Some(v);
                Some(v)
            }
        };
        log::info!(
            "generator epoch {epoch} train {:.5} valid loss {:?} ndcg {:?}",
            record.train_loss,
            record.valid_loss,
            record.valid_ndcg
        );
        curve.push(record);
        if let Some(s) = score {
            if best.as_ref().is_none_or(|(b, _, _)| s > *b) {
                best = Some((s, epoch, model.clone()));
            }
        }
    }
    let (model, best_epoch) = match best {
        Some((_, e, m)) => (m, e),
        None => (model, config.epochs),
    };
    Ok(TrainedGenerator { model, curve, best_epoch })
}
