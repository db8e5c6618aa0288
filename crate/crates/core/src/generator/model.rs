use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::GeneratorConfig;
use crate::error::{Error, Result};
use crate::numerics::checkpoint::Checkpoint;
use crate::numerics::{log_softmax_in_place, prefixed, Block, BlockCache, LayerNorm, LayerNormCache, Params, Tensor2};

/// Decoder-only transformer over flattened item token blocks.
///
/// Flat slot `r` holds the level `r % K` token of item `r / K`; its input is
/// `E_id[k][s] + E_level[k] + E_pos[t]` with `t = r / K + 1`. The output row
/// at slot `r` predicts slot `r + 1` through the head of that slot's level.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorModel {
    pub e_id: Vec<Tensor2>,
    pub e_level: Tensor2,
    pub e_pos: Tensor2,
    pub blocks: Vec<Block>,
    pub ln_f: LayerNorm,
    /// `d_model × V_k`, no bias.
    pub heads: Vec<Tensor2>,
    pub use_level_embedding: bool,
    pub use_position_embedding: bool,
    pub temperature: f64,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    tokens: Vec<usize>,
    blocks: Vec<BlockCache>,
    ln_f: LayerNormCache,
    hidden: Tensor2,
}

impl ForwardCache {
    pub fn block_caches(&self) -> &[BlockCache] {
        &self.blocks
    }
}

impl GeneratorModel {
    pub fn new(config: &GeneratorConfig, vocab: &[usize]) -> Result<Self> {
        config.validate()?;
        if vocab.is_empty() || vocab.contains(&0) {
            return Err(Error::Config(format!("generator vocabulary sizes must be positive, got {vocab:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.d_model;
        let std = config.init_std;
        let e_id = vocab.iter().map(|&v| Tensor2::randn(v, d, std, &mut rng)).collect();
        let e_level = Tensor2::randn(vocab.len(), d, std, &mut rng);
        let e_pos = Tensor2::randn(config.max_history + 1, d, std, &mut rng);
        let blocks = (0..config.n_layers)
            .map(|_| Block::new(d, config.n_heads, config.d_ff, &mut rng))
            .collect::<Result<_>>()?;
        let heads = vocab
            .iter()
            .map(|&v| Tensor2::randn(d, v, 1.0 / (d as f64).sqrt(), &mut rng))
            .collect();
        Ok(Self {
            e_id,
            e_level,
            e_pos,
            blocks,
            ln_f: LayerNorm::new(d),
            heads,
            use_level_embedding: config.use_level_embedding,
            use_position_embedding: config.use_position_embedding,
            temperature: config.temperature,
        })
    }

    pub fn depth(&self) -> usize {
        self.e_id.len()
    }

    pub fn vocab(&self) -> Vec<usize> {
        self.e_id.iter().map(Tensor2::rows).collect()
    }

    pub fn d_model(&self) -> usize {
        self.e_level.cols()
    }

    /// Largest history length the position table supports.
    pub fn max_history(&self) -> usize {
        self.e_pos.rows() - 1
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        let k = self.depth();
        let items = tokens.len().div_ceil(k);
        if items > self.e_pos.rows() {
            return Err(Error::shape("generator sequence items", format!("≤ {}", self.e_pos.rows()), items));
        }
        for (r, &s) in tokens.iter().enumerate() {
            let v = self.e_id[r % k].rows();
            if s >= v {
                return Err(Error::TokenRange {
                    level: r % k + 1,
                    token: s,
                    vocab: v,
                });
            }
        }
        Ok(())
    }

    /// Input embedding of one slot.
    pub fn slot_embedding(&self, slot: usize, token: usize) -> Vec<f64> {
        let k = slot % self.depth();
        let mut x = self.e_id[k].row(token).to_vec();
        if self.use_level_embedding {
            x.iter_mut().zip(self.e_level.row(k)).for_each(|(a, b)| *a += b);
        }
        if self.use_position_embedding {
            let t = slot / self.depth();
            x.iter_mut().zip(self.e_pos.row(t)).for_each(|(a, b)| *a += b);
        }
        x
    }

    /// Embedded sequence matrix, one row per flat slot.
    pub fn build_input(&self, tokens: &[usize]) -> Result<Tensor2> {
        self.check_tokens(tokens)?;
        let mut x = Tensor2::zeros(tokens.len(), self.d_model());
        for (r, &s) in tokens.iter().enumerate() {
            x.row_mut(r).copy_from_slice(&self.slot_embedding(r, s));
        }
        Ok(x)
    }

    /// Level predicted by the output row at `slot`.
    pub fn next_level(&self, slot: usize) -> usize {
        (slot + 1) % self.depth()
    }

    /// Final hidden states after the last layer norm.
    pub fn hidden(&self, tokens: &[usize]) -> Result<(Tensor2, ForwardCache)> {
        let mut x = self.build_input(tokens)?;
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (y, c) = b.forward(&x, true)?;
            caches.push(c);
            x = y;
        }
        let (hidden, ln_f) = self.ln_f.forward(&x)?;
        Ok((
            hidden.clone(),
            ForwardCache {
                tokens: tokens.to_vec(),
                blocks: caches,
                ln_f,
                hidden,
            },
        ))
    }

    /// Raw logits φ for every slot, over the vocabulary of the level that
    /// follows it.
    pub fn forward(&self, tokens: &[usize]) -> Result<(Vec<Vec<f64>>, ForwardCache)> {
        let (hidden, cache) = self.hidden(tokens)?;
        let mut out = vec![Vec::new(); tokens.len()];
        for k in 0..self.depth() {
            let rows: Vec<usize> = (0..tokens.len()).filter(|&r| self.next_level(r) == k).collect();
            if rows.is_empty() {
                continue;
            }
            let logits = hidden.gather_rows(&rows).matmul(&self.heads[k])?;
            for (i, &r) in rows.iter().enumerate() {
                out[r] = logits.row(i).to_vec();
            }
        }
        if out.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("generator logits".into()));
        }
        Ok((out, cache))
    }

    /// Gradients of all parameters and of the input embedding matrix, given
    /// the gradient with respect to every slot's logits (empty vectors count
    /// as zero).
    pub fn backward(&self, cache: &ForwardCache, dlogits: &[Vec<f64>]) -> Result<(GeneratorModel, Tensor2)> {
        let n = cache.tokens.len();
        if dlogits.len() != n {
            return Err(Error::shape("generator backward slots", n, dlogits.len()));
        }
        let mut grads = self.zeros_like();
        let mut dh = Tensor2::zeros(n, self.d_model());
        for k in 0..self.depth() {
            let v = self.heads[k].cols();
            let rows: Vec<usize> = (0..n).filter(|&r| self.next_level(r) == k && !dlogits[r].is_empty()).collect();
            if rows.is_empty() {
                continue;
            }
            let mut dl = Tensor2::zeros(rows.len(), v);
            for (i, &r) in rows.iter().enumerate() {
                if dlogits[r].len() != v {
                    return Err(Error::shape(format!("logit gradient at slot {r}"), v, dlogits[r].len()));
                }
                dl.row_mut(i).copy_from_slice(&dlogits[r]);
            }
            let h = cache.hidden.gather_rows(&rows);
            grads.heads[k].add_t_matmul(&h, &dl);
            let dhk = dl.matmul_t(&self.heads[k])?;
            for (i, &r) in rows.iter().enumerate() {
                dh.row_mut(r).copy_from_slice(dhk.row(i));
            }
        }
        let (mut dx, g_ln) = self.ln_f.backward(&cache.ln_f, &dh);
        grads.ln_f = g_ln;
        for (l, block) in self.blocks.iter().enumerate().rev() {
            let (d, g) = block.backward(&cache.blocks[l], &dx)?;
            grads.blocks[l] = g;
            dx = d;
        }
        let kd = self.depth();
        for (r, &s) in cache.tokens.iter().enumerate() {
            let k = r % kd;
            let row = dx.row(r);
            grads.e_id[k].row_mut(s).iter_mut().zip(row).for_each(|(a, b)| *a += b);
            if self.use_level_embedding {
                grads.e_level.row_mut(k).iter_mut().zip(row).for_each(|(a, b)| *a += b);
            }
            if self.use_position_embedding {
                grads.e_pos.row_mut(r / kd).iter_mut().zip(row).for_each(|(a, b)| *a += b);
            }
        }
        Ok((grads, dx))
    }

    /// Log-probability of `tuple` as the next item after `history` (flat
    /// tokens of whole items), from one full forward pass.
    pub fn tuple_log_prob(&self, history: &[usize], tuple: &[usize]) -> Result<f64> {
        let k = self.depth();
        if history.is_empty() || !history.len().is_multiple_of(k) || tuple.len() != k {
            return Err(Error::shape("history/tuple", format!("whole blocks of {k}"), format!("{}/{}", history.len(), tuple.len())));
        }
        let mut tokens = history.to_vec();
        tokens.extend_from_slice(tuple);
        let (logits, _) = self.forward(&tokens)?;
        let mut total = 0.0;
        for (j, &s) in tuple.iter().enumerate() {
            let mut z: Vec<f64> = logits[history.len() - 1 + j].iter().map(|v| v / self.temperature).collect();
            log_softmax_in_place(&mut z);
            total += z[s];
        }
        Ok(total)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let vocab: Vec<String> = self.vocab().iter().map(usize::to_string).collect();
        let b = &self.blocks;
        Checkpoint::from_params(self)
            .with_meta("kind", "generator")
            .with_meta("vocab", vocab.join(","))
            .with_meta("d_model", self.d_model().to_string())
            .with_meta("n_layers", b.len().to_string())
            .with_meta("n_heads", b.first().map_or(1, |b| b.attn.n_heads).to_string())
            .with_meta("d_ff", b.first().map_or(1, |b| b.ff.layers[0].weight.cols()).to_string())
            .with_meta("max_history", self.max_history().to_string())
            .with_meta("temperature", self.temperature.to_string())
            .with_meta("use_level_embedding", self.use_level_embedding.to_string())
            .with_meta("use_position_embedding", self.use_position_embedding.to_string())
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        fn get<T: std::str::FromStr>(ckpt: &Checkpoint, key: &str) -> Result<T> {
            ckpt.meta
                .get(key)
                .ok_or_else(|| Error::Checkpoint(format!("missing metadata {key:?}")))?
                .parse()
                .map_err(|_| Error::Checkpoint(format!("bad metadata {key:?}")))
        }
        if ckpt.meta.get("kind").map(String::as_str) != Some("generator") {
            return Err(Error::Checkpoint("not a generator checkpoint".into()));
        }
        let vocab = ckpt
            .meta
            .get("vocab")
            .ok_or_else(|| Error::Checkpoint("missing metadata \"vocab\"".into()))?
            .split(',')
            .map(|v| v.parse::<usize>().map_err(|_| Error::Checkpoint("bad vocab".into())))
            .collect::<Result<Vec<_>>>()?;
        let config = GeneratorConfig {
            d_model: get(ckpt, "d_model")?,
            n_layers: get(ckpt, "n_layers")?,
            n_heads: get(ckpt, "n_heads")?,
            d_ff: get(ckpt, "d_ff")?,
            max_history: get(ckpt, "max_history")?,
            temperature: get(ckpt, "temperature")?,
            use_level_embedding: get(ckpt, "use_level_embedding")?,
            use_position_embedding: get(ckpt, "use_position_embedding")?,
            ..GeneratorConfig::default()
        };
        let mut model = Self::new(&config, &vocab)?;
        ckpt.load_into(&mut model)?;
        Ok(model)
    }
}

impl Params for GeneratorModel {
    fn tensors(&self) -> Vec<&Tensor2> {
        let mut v: Vec<&Tensor2> = self.e_id.iter().collect();
        v.push(&self.e_level);
        v.push(&self.e_pos);
        for b in &self.blocks {
            v.extend(b.tensors());
        }
        v.extend(self.ln_f.tensors());
        v.extend(self.heads.iter());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor2> {
        let mut v: Vec<&mut Tensor2> = self.e_id.iter_mut().collect();
        v.push(&mut self.e_level);
        v.push(&mut self.e_pos);
        for b in &mut self.blocks {
            v.extend(b.tensors_mut());
        }
        v.extend(self.ln_f.tensors_mut());
        v.extend(self.heads.iter_mut());
        v
    }

    fn names(&self) -> Vec<String> {
        let mut v: Vec<String> = (1..=self.e_id.len()).map(|k| format!("e_id.{k}")).collect();
        v.push("e_level".into());
        v.push("e_pos".into());
        for (l, b) in self.blocks.iter().enumerate() {
            v.extend(prefixed(&format!("block.{l}"), b));
        }
        v.extend(prefixed("ln_f", &self.ln_f));
        v.extend((1..=self.heads.len()).map(|k| format!("head.{k}")));
        v
    }

    fn zeros_like(&self) -> Self {
        Self {
            e_id: self.e_id.iter().map(Tensor2::zeros_like).collect(),
            e_level: self.e_level.zeros_like(),
            e_pos: self.e_pos.zeros_like(),
            blocks: self.blocks.iter().map(Params::zeros_like).collect(),
            ln_f: self.ln_f.zeros_like(),
            heads: self.heads.iter().map(Tensor2::zeros_like).collect(),
            use_level_embedding: self.use_level_embedding,
            use_position_embedding: self.use_position_embedding,
            temperature: self.temperature,
        }
    }
}
