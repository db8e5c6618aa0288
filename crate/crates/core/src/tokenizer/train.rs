use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use super::{tokenizer_loss, LevelSource, TokenIndex, TokenizerConfig, TokenizerInput, TokenizerModel};
use crate::error::{Error, Result};
use crate::numerics::{Adam, Params, Tensor2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Item-weighted mean over the epoch's batches, measured before each
    /// update.
    pub loss: f64,
    pub reconstruction: f64,
    pub commitment: f64,
    pub reseeded_codes: usize,
}

#[derive(Debug, Clone)]
pub struct TrainedTokenizer {
    pub model: TokenizerModel,
    pub curve: Vec<EpochStats>,
}

fn check_input(input: &TokenizerInput, config: &TokenizerConfig) -> Result<()> {
    config.validate()?;
    if input.is_empty() {
        return Err(Error::Config("tokenizer training needs at least one item".into()));
    }
    if input.depth() != config.depth() {
        return Err(Error::shape("tokenizer levels (codebook_sizes)", config.depth(), input.depth()));
    }
    let has_cf = input.sources.contains(&LevelSource::Collaborative);
    if has_cf != config.use_cf {
        return Err(Error::Config(format!(
            "tokenizer.use_cf = {} but the input {} a collaborative level",
            config.use_cf,
            if has_cf { "has" } else { "lacks" }
        )));
    }
    Ok(())
}

fn batches(n: usize, config: &TokenizerConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    if n <= config.max_full_batch {
        return vec![order];
    }
    order.shuffle(rng);
    order.chunks(config.batch_size).map(<[usize]>::to_vec).collect()
}

fn rms(t: &Tensor2) -> f64 {
    (t.sq_norm() / t.data().len().max(1) as f64).sqrt()
}

fn noisy_copy(src: &[f64], std: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let noise = Normal::new(0.0, std).expect("finite std");
    src.iter().map(|v| v + noise.sample(rng)).collect()
}

/// Model before any update: random encoders/decoders, codebooks copied from
/// encoder outputs of the first batch plus noise.
pub fn initialize_tokenizer(input: &TokenizerInput, config: &TokenizerConfig) -> Result<TokenizerModel> {
    check_input(input, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let d_sem = input
        .sources
        .iter()
        .position(|&s| s == LevelSource::Semantic)
        .map(|k| input.levels[k].cols())
        .ok_or_else(|| Error::Config("tokenizer needs at least one semantic level".into()))?;
    let d_cf = input
        .sources
        .iter()
        .position(|&s| s == LevelSource::Collaborative)
        .map(|k| input.levels[k].cols());
    let mut model = TokenizerModel::new(config, &input.sources, d_sem, d_cf, &mut rng)?;
    let first = batches(input.len(), config, &mut rng).swap_remove(0);
    let levels = input.select(&first);
    for k in 0..model.depth() {
        let h = model.encode(k, &levels[k])?;
        let std = config.init_noise * rms(&h);
        let v = model.codebooks[k].rows();
        let picks: Vec<usize> = if h.rows() >= v {
            sample(&mut rng, h.rows(), v).into_vec()
        } else {
            (0..v).map(|_| rng.gen_range(0..h.rows())).collect()
        };
        for (j, &b) in picks.iter().enumerate() {
            let row = noisy_copy(h.row(b), std, &mut rng);
            model.codebooks[k].row_mut(j).copy_from_slice(&row);
        }
    }
    Ok(model)
}

/// Adam over all parameters, one update per batch. After every epoch but
/// the last, codes no item selected during that epoch are moved onto a
/// random encoder output of the epoch's last batch (if enabled).
pub fn train_tokenizer(input: &TokenizerInput, config: &TokenizerConfig) -> Result<TrainedTokenizer> {
    let mut model = initialize_tokenizer(input, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut opt = Adam::new(config.optimizer, &model.tensors());
    let mut curve = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut usage: Vec<Vec<u32>> = model.codebooks.iter().map(|c| vec![0; c.rows()]).collect();
        let mut stats = EpochStats {
            epoch: epoch + 1,
            loss: 0.0,
            reconstruction: 0.0,
            commitment: 0.0,
            reseeded_codes: 0,
        };
        let order = batches(input.len(), config, &mut rng);
        for batch in &order {
            let levels = input.select(batch);
            let (terms, grads, assign) = tokenizer_loss(&model, &levels)?;
            let w = batch.len() as f64 / input.len() as f64;
            stats.loss += w * terms.total();
            stats.reconstruction += w * terms.reconstruction;
            stats.commitment += w * (terms.codebook_commitment + terms.encoder_commitment);
            for (u, a) in usage.iter_mut().zip(&assign) {
                for &j in a {
                    u[j] += 1;
                }
            }
            opt.step(model.tensors_mut(), &grads.tensors())?;
        }
        if !stats.loss.is_finite() {
            return Err(Error::NonFinite(format!("tokenizer loss at epoch {}", epoch + 1)));
        }
        if config.reseed_dead_codes && epoch + 1 < config.epochs {
            let last = input.select(order.last().expect("at least one batch"));
            for k in 0..model.depth() {
                let dead: Vec<usize> = (0..usage[k].len()).filter(|&j| usage[k][j] == 0).collect();
                if dead.is_empty() {
                    continue;
                }
                let h = model.encode(k, &last[k])?;
                let std = config.init_noise * rms(&h);
                let t = model.codebook_tensor_index(k);
                for &j in &dead {
                    let b = rng.gen_range(0..h.rows());
                    let row = noisy_copy(h.row(b), std, &mut rng);
                    model.codebooks[k].row_mut(j).copy_from_slice(&row);
                    opt.reset_row(t, j);
                }
                stats.reseeded_codes += dead.len();
            }
        }
        log::debug!(
            "tokenizer epoch {} loss {:.6} recon {:.6} reseeded {}",
            stats.epoch,
            stats.loss,
            stats.reconstruction,
            stats.reseeded_codes
        );
        curve.push(stats);
    }
    Ok(TrainedTokenizer { model, curve })
}

/// Token sequence of every input item.
pub fn tokenize_corpus(model: &TokenizerModel, input: &TokenizerInput) -> Result<TokenIndex> {
    let assign = model.assign(&input.levels)?;
    let tokens: Vec<Vec<usize>> = (0..input.len()).map(|i| assign.iter().map(|a| a[i]).collect()).collect();
    TokenIndex::new(input.ids.iter().cloned().zip(tokens).collect(), &model.codebook_sizes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clustered(n_per: usize, seed: u64, cf: bool) -> TokenizerInput {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = [[3.0, 0.0, 0.0, 1.0], [-3.0, 0.5, 0.0, -1.0]];
        let noise = Normal::new(0.0, 0.05).unwrap();
        let n = 2 * n_per;
        let depth = 3;
        let mut levels = Vec::new();
        for k in 0..depth {
            let mut t = Tensor2::zeros(n, 4);
            for i in 0..n {
                let c = centers[(i + k) % 2];
                for (d, &cv) in c.iter().enumerate() {
                    t.set(i, d, cv * (k + 1) as f64 / 2.0 + noise.sample(&mut rng));
                }
            }
            levels.push(t);
        }
        let mut sources = vec![LevelSource::Semantic; depth];
        if cf {
            sources[depth - 1] = LevelSource::Collaborative;
        }
        TokenizerInput::new((0..n).map(|i| format!("i{i}")).collect(), levels, sources).unwrap()
    }

    fn small_config(epochs: usize, cf: bool) -> TokenizerConfig {
        TokenizerConfig {
            codebook_sizes: vec![2, 2, 2],
            code_dim: 4,
            hidden_dim: 16,
            epochs,
            use_cf: cf,
            optimizer: crate::numerics::AdamConfig {
                learning_rate: 1e-2,
                ..Default::default()
            },
            ..TokenizerConfig::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let input = clustered(5, 1, true);
        let cfg = small_config(0, true);
        let trained = train_tokenizer(&input, &cfg).unwrap();
        assert_eq!(trained.model, initialize_tokenizer(&input, &cfg).unwrap());
        assert!(trained.curve.is_empty());
    }

    #[test]
    fn separable_clusters_are_reconstructed() {
        let input = clustered(20, 2, true);
        let cfg = small_config(300, true);
        let init = initialize_tokenizer(&input, &cfg).unwrap();
        let (initial, _, _) = tokenizer_loss(&init, &input.levels).unwrap();
        let trained = train_tokenizer(&input, &cfg).unwrap();
        let (fin, _, _) = tokenizer_loss(&trained.model, &input.levels).unwrap();
        assert!(fin.reconstruction < 0.1 * initial.reconstruction, "{} vs {}", fin.reconstruction, initial.reconstruction);
        let index = tokenize_corpus(&trained.model, &input).unwrap();
        for k in 0..3 {
            let a = index.get("i0").unwrap()[k];
            let b = index.get("i1").unwrap()[k];
            assert_ne!(a, b, "level {k} merges the two clusters");
        }
    }

    #[test]
    fn single_item_loss_goes_down() {
        let input = clustered(1, 3, false).select(&[0]);
        let input = TokenizerInput::new(vec!["x".into()], input, vec![LevelSource::Semantic; 3]).unwrap();
        let trained = train_tokenizer(&input, &small_config(50, false)).unwrap();
        assert!(trained.curve.last().unwrap().loss < trained.curve[0].loss);
    }

    #[test]
    fn training_is_deterministic_and_tokenization_consistent() {
        let input = clustered(8, 4, true);
        let cfg = small_config(20, true);
        let a = train_tokenizer(&input, &cfg).unwrap();
        let b = train_tokenizer(&input, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        let ia = tokenize_corpus(&a.model, &input).unwrap();
        assert_eq!(ia, tokenize_corpus(&b.model, &input).unwrap());
    }

    #[test]
    fn identical_embeddings_collide() {
        let mut input = clustered(4, 5, true);
        for l in &mut input.levels {
            let r = l.row(0).to_vec();
            l.row_mut(1).copy_from_slice(&r);
        }
        let trained = train_tokenizer(&input, &small_config(5, true)).unwrap();
        let index = tokenize_corpus(&trained.model, &input).unwrap();
        assert_eq!(index.get("i0"), index.get("i1"));
    }

    #[test]
    fn minibatches_cover_every_item_once() {
        let cfg = TokenizerConfig {
            max_full_batch: 10,
            batch_size: 4,
            ..TokenizerConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = batches(11, &cfg, &mut rng);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 3]);
        let mut all: Vec<usize> = b.concat();
        all.sort_unstable();
        assert_eq!(all, (0..11).collect::<Vec<_>>());
        assert_eq!(batches(10, &cfg, &mut rng), vec![(0..10).collect::<Vec<_>>()]);
    }

    #[test]
    fn mismatched_cf_flag_is_rejected() {
        let input = clustered(3, 6, true);
        assert!(train_tokenizer(&input, &small_config(1, false)).is_err());
    }
}
