use rand::Rng;

use super::{prefixed, Mlp, MlpCache, Params, Tensor2};
use crate::error::{Error, Result};

/// Numerically stable row-wise softmax.
pub fn softmax_rows(x: &Tensor2) -> Tensor2 {
    let mut out = x.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    out
}

pub fn log_softmax_rows(x: &Tensor2) -> Tensor2 {
    let mut out = x.clone();
    for r in 0..out.rows() {
        log_softmax_in_place(out.row_mut(r));
    }
    out
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub(crate) fn log_softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    for v in row.iter_mut() {
        *v -= lse;
    }
}

/// Row-wise layer normalisation with learned scale and shift.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Tensor2,
    pub beta: Tensor2,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    /// Normalised input before the affine rescale.
    pub normalized: Tensor2,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub const DEFAULT_EPS: f64 = 1e-12;

    pub fn new(dim: usize) -> Self {
        let mut gamma = Tensor2::zeros(1, dim);
        gamma.fill(1.0);
        Self {
            gamma,
            beta: Tensor2::zeros(1, dim),
            eps: Self::DEFAULT_EPS,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.cols()
    }

    pub fn forward(&self, x: &Tensor2) -> Result<(Tensor2, LayerNormCache)> {
        let d = self.dim();
        if x.cols() != d {
            return Err(Error::shape("layer norm", d, x.cols()));
        }
        let mut normalized = x.clone();
        let mut inv_std = Vec::with_capacity(x.rows());
        for r in 0..x.rows() {
            let row = normalized.row_mut(r);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + self.eps).sqrt();
            row.iter_mut().for_each(|v| *v = (*v - mean) * is);
            inv_std.push(is);
        }
        let mut y = normalized.clone();
        for r in 0..y.rows() {
            for ((v, g), b) in y.row_mut(r).iter_mut().zip(self.gamma.data()).zip(self.beta.data()) {
                *v = *v * g + b;
            }
        }
        Ok((y, LayerNormCache { normalized, inv_std }))
    }

    pub fn backward(&self, cache: &LayerNormCache, dy: &Tensor2) -> (Tensor2, LayerNorm) {
        let d = self.dim() as f64;
        let mut grads = self.zeros_like();
        let mut dx = dy.zeros_like();
        for r in 0..dy.rows() {
            let xhat = cache.normalized.row(r);
            let dyr = dy.row(r);
            let mut mean_dxhat = 0.0;
            let mut mean_dxhat_xhat = 0.0;
            for c in 0..dyr.len() {
                let dxhat = dyr[c] * self.gamma.data()[c];
                mean_dxhat += dxhat;
                mean_dxhat_xhat += dxhat * xhat[c];
                grads.gamma.data_mut()[c] += dyr[c] * xhat[c];
                grads.beta.data_mut()[c] += dyr[c];
            }
            mean_dxhat /= d;
            mean_dxhat_xhat /= d;
            let is = cache.inv_std[r];
            for (c, out) in dx.row_mut(r).iter_mut().enumerate() {
                let dxhat = dyr[c] * self.gamma.data()[c];
                *out = is * (dxhat - mean_dxhat - xhat[c] * mean_dxhat_xhat);
            }
        }
        (dx, grads)
    }
}

impl Params for LayerNorm {
    fn tensors(&self) -> Vec<&Tensor2> {
        vec![&self.gamma, &self.beta]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor2> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn names(&self) -> Vec<String> {
        vec!["gamma".into(), "beta".into()]
    }

    fn zeros_like(&self) -> Self {
        Self {
            gamma: self.gamma.zeros_like(),
            beta: self.beta.zeros_like(),
            eps: self.eps,
        }
    }
}

/// Multi-head scaled dot-product self-attention.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadAttention {
    pub n_heads: usize,
    pub wq: Tensor2,
    pub wk: Tensor2,
    pub wv: Tensor2,
    pub wo: Tensor2,
    pub bq: Tensor2,
    pub bk: Tensor2,
    pub bv: Tensor2,
    pub bo: Tensor2,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    x: Tensor2,
    q: Tensor2,
    k: Tensor2,
    v: Tensor2,
    /// Attention probabilities, one `L × L` matrix per head.
    probs: Vec<Tensor2>,
    ctx: Tensor2,
}

/// Projected keys and values of already-processed positions.
#[derive(Debug, Clone, Default)]
pub struct KvCache {
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
}

impl KvCache {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

fn affine(x: &Tensor2, w: &Tensor2, b: &Tensor2) -> Result<Tensor2> {
    let mut y = x.matmul(w)?;
    y.add_row_broadcast(b);
    Ok(y)
}

fn head_cols(t: &Tensor2, h: usize, dh: usize) -> Tensor2 {
    let mut out = Tensor2::zeros(t.rows(), dh);
    for r in 0..t.rows() {
        out.row_mut(r).copy_from_slice(&t.row(r)[h * dh..(h + 1) * dh]);
    }
    out
}

fn add_head_cols(t: &mut Tensor2, part: &Tensor2, h: usize, dh: usize) {
    for r in 0..t.rows() {
        for (a, b) in t.row_mut(r)[h * dh..(h + 1) * dh].iter_mut().zip(part.row(r)) {
            *a += b;
        }
    }
}

impl MultiHeadAttention {
    pub fn new<R: Rng + ?Sized>(d_model: usize, n_heads: usize, rng: &mut R) -> Result<Self> {
        if n_heads == 0 || !d_model.is_multiple_of(n_heads) {
            return Err(Error::Config(format!("{n_heads} heads do not divide model dim {d_model}")));
        }
        let std = 1.0 / (d_model as f64).sqrt();
        Ok(Self {
            n_heads,
            wq: Tensor2::randn(d_model, d_model, std, rng),
            wk: Tensor2::randn(d_model, d_model, std, rng),
            wv: Tensor2::randn(d_model, d_model, std, rng),
            wo: Tensor2::randn(d_model, d_model, std, rng),
            bq: Tensor2::zeros(1, d_model),
            bk: Tensor2::zeros(1, d_model),
            bv: Tensor2::zeros(1, d_model),
            bo: Tensor2::zeros(1, d_model),
        })
    }

    pub fn d_model(&self) -> usize {
        self.wq.rows()
    }

    fn head_dim(&self) -> usize {
        self.d_model() / self.n_heads
    }

    pub fn forward(&self, x: &Tensor2, causal: bool) -> Result<(Tensor2, AttentionCache)> {
        let d = self.d_model();
        if x.cols() != d {
            return Err(Error::shape("attention input", d, x.cols()));
        }
        if self.n_heads == 0 || !d.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!("{} heads do not divide model dim {d}", self.n_heads)));
        }
        let l = x.rows();
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let q = affine(x, &self.wq, &self.bq)?;
        let k = affine(x, &self.wk, &self.bk)?;
        let v = affine(x, &self.wv, &self.bv)?;
        let mut ctx = Tensor2::zeros(l, d);
        let mut probs = Vec::with_capacity(self.n_heads);
        for h in 0..self.n_heads {
            let qh = head_cols(&q, h, dh);
            let kh = head_cols(&k, h, dh);
            let vh = head_cols(&v, h, dh);
            let mut scores = qh.matmul_t(&kh)?;
            for i in 0..l {
                let row = scores.row_mut(i);
                for (j, s) in row.iter_mut().enumerate() {
                    if causal && j > i {
                        *s = f64::NEG_INFINITY;
                    } else {
                        *s *= scale;
                    }
                }
                softmax_in_place(row);
            }
            let ch = scores.matmul(&vh)?;
            add_head_cols(&mut ctx, &ch, h, dh);
            probs.push(scores);
        }
        let out = affine(&ctx, &self.wo, &self.bo)?;
        Ok((
            out,
            AttentionCache {
                x: x.clone(),
                q,
                k,
                v,
                probs,
                ctx,
            },
        ))
    }

    pub fn backward(&self, cache: &AttentionCache, dout: &Tensor2) -> Result<(Tensor2, MultiHeadAttention)> {
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut g = self.zeros_like();
        g.wo.add_t_matmul(&cache.ctx, dout);
        g.bo = dout.sum_rows();
        let dctx = dout.matmul_t(&self.wo)?;
        let mut dq = cache.q.zeros_like();
        let mut dk = cache.k.zeros_like();
        let mut dv = cache.v.zeros_like();
        for h in 0..self.n_heads {
            let p = &cache.probs[h];
            let qh = head_cols(&cache.q, h, dh);
            let kh = head_cols(&cache.k, h, dh);
            let vh = head_cols(&cache.v, h, dh);
            let dch = head_cols(&dctx, h, dh);
            let dp = dch.matmul_t(&vh)?;
            let dvh = p.t_matmul(&dch)?;
            let mut ds = dp;
            for i in 0..ds.rows() {
                let pr = p.row(i);
                let dot: f64 = ds.row(i).iter().zip(pr).map(|(a, b)| a * b).sum();
                for (s, &pv) in ds.row_mut(i).iter_mut().zip(pr) {
                    *s = pv * (*s - dot) * scale;
                }
            }
            add_head_cols(&mut dq, &ds.matmul(&kh)?, h, dh);
            add_head_cols(&mut dk, &ds.t_matmul(&qh)?, h, dh);
            add_head_cols(&mut dv, &dvh, h, dh);
        }
        g.wq.add_t_matmul(&cache.x, &dq);
        g.wk.add_t_matmul(&cache.x, &dk);
        g.wv.add_t_matmul(&cache.x, &dv);
        g.bq = dq.sum_rows();
        g.bk = dk.sum_rows();
        g.bv = dv.sum_rows();
        let mut dx = dq.matmul_t(&self.wq)?;
        dx.add_assign(&dk.matmul_t(&self.wk)?);
        dx.add_assign(&dv.matmul_t(&self.wv)?);
        Ok((dx, g))
    }

    /// Key/value cache for the positions seen by a previous `forward`.
    pub fn kv_from_cache(cache: &AttentionCache) -> KvCache {
        KvCache {
            keys: cache.k.iter_rows().map(<[f64]>::to_vec).collect(),
            values: cache.v.iter_rows().map(<[f64]>::to_vec).collect(),
        }
    }

    /// Processes one new position that attends to `prefix`, then `extra`,
    /// then itself. Its key and value are appended to `extra`.
    pub fn step(&self, x: &[f64], prefix: &KvCache, extra: &mut KvCache) -> Result<Vec<f64>> {
        let d = self.d_model();
        let xt = Tensor2::from_vec(1, d, x.to_vec())?;
        let q = affine(&xt, &self.wq, &self.bq)?.into_data();
        extra.keys.push(affine(&xt, &self.wk, &self.bk)?.into_data());
        extra.values.push(affine(&xt, &self.wv, &self.bv)?.into_data());
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let n = prefix.len() + extra.len();
        let key = |j: usize| {
            if j < prefix.len() {
                &prefix.keys[j]
            } else {
                &extra.keys[j - prefix.len()]
            }
        };
        let value = |j: usize| {
            if j < prefix.len() {
                &prefix.values[j]
            } else {
                &extra.values[j - prefix.len()]
            }
        };
        let mut ctx = vec![0.0; d];
        let mut w = vec![0.0; n];
        for h in 0..self.n_heads {
            let cols = h * dh..(h + 1) * dh;
            for (j, wj) in w.iter_mut().enumerate() {
                *wj = scale * q[cols.clone()].iter().zip(&key(j)[cols.clone()]).map(|(a, b)| a * b).sum::<f64>();
            }
            softmax_in_place(&mut w);
            for (j, &wj) in w.iter().enumerate() {
                for (c, vv) in ctx[cols.clone()].iter_mut().zip(&value(j)[cols.clone()]) {
                    *c += wj * vv;
                }
            }
        }
        let ctx = Tensor2::from_vec(1, d, ctx)?;
        Ok(affine(&ctx, &self.wo, &self.bo)?.into_data())
    }
}

impl Params for MultiHeadAttention {
    fn tensors(&self) -> Vec<&Tensor2> {
        vec![&self.wq, &self.wk, &self.wv, &self.wo, &self.bq, &self.bk, &self.bv, &self.bo]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor2> {
        vec![
            &mut self.wq,
            &mut self.wk,
            &mut self.wv,
            &mut self.wo,
            &mut self.bq,
            &mut self.bk,
            &mut self.bv,
            &mut self.bo,
        ]
    }

    fn names(&self) -> Vec<String> {
        ["wq", "wk", "wv", "wo", "bq", "bk", "bv", "bo"].map(String::from).to_vec()
    }

    fn zeros_like(&self) -> Self {
        Self {
            n_heads: self.n_heads,
            wq: self.wq.zeros_like(),
            wk: self.wk.zeros_like(),
            wv: self.wv.zeros_like(),
            wo: self.wo.zeros_like(),
            bq: self.bq.zeros_like(),
            bk: self.bk.zeros_like(),
            bv: self.bv.zeros_like(),
            bo: self.bo.zeros_like(),
        }
    }
}

/// Pre-norm transformer block:
/// `x + attn(ln1(x))`, then `h + ff(ln2(h))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub ln1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub ln2: LayerNorm,
    pub ff: Mlp,
}

#[derive(Debug, Clone)]
pub struct BlockCache {
    ln1: LayerNormCache,
    pub attn: AttentionCache,
    ln2: LayerNormCache,
    ff: MlpCache,
}

impl Block {
    pub fn new<R: Rng + ?Sized>(d_model: usize, n_heads: usize, d_ff: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            ln1: LayerNorm::new(d_model),
            attn: MultiHeadAttention::new(d_model, n_heads, rng)?,
            ln2: LayerNorm::new(d_model),
            ff: Mlp::new(&[d_model, d_ff, d_model], rng)?,
        })
    }

    pub fn forward(&self, x: &Tensor2, causal: bool) -> Result<(Tensor2, BlockCache)> {
        let (a, ln1) = self.ln1.forward(x)?;
        let (att, attn) = self.attn.forward(&a, causal)?;
        let mut h = x.clone();
        h.add_assign(&att);
        let (b, ln2) = self.ln2.forward(&h)?;
        let (f, ff) = self.ff.forward(&b)?;
        h.add_assign(&f);
        Ok((h, BlockCache { ln1, attn, ln2, ff }))
    }

    pub fn backward(&self, cache: &BlockCache, dy: &Tensor2) -> Result<(Tensor2, Block)> {
        let (db, g_ff) = self.ff.backward(&cache.ff, dy)?;
        let (dh_ln2, g_ln2) = self.ln2.backward(&cache.ln2, &db);
        let mut dh = dy.clone();
        dh.add_assign(&dh_ln2);
        let (da, g_attn) = self.attn.backward(&cache.attn, &dh)?;
        let (dx_ln1, g_ln1) = self.ln1.backward(&cache.ln1, &da);
        let mut dx = dh;
        dx.add_assign(&dx_ln1);
        Ok((
            dx,
            Block {
                ln1: g_ln1,
                attn: g_attn,
                ln2: g_ln2,
                ff: g_ff,
            },
        ))
    }

    /// Incremental forward of a single position; see [`MultiHeadAttention::step`].
    pub fn step(&self, x: &[f64], prefix: &KvCache, extra: &mut KvCache) -> Result<Vec<f64>> {
        let d = x.len();
        let xt = Tensor2::from_vec(1, d, x.to_vec())?;
        let (a, _) = self.ln1.forward(&xt)?;
        let att = self.attn.step(a.data(), prefix, extra)?;
        let h: Vec<f64> = x.iter().zip(&att).map(|(a, b)| a + b).collect();
        let ht = Tensor2::from_vec(1, d, h)?;
        let (b, _) = self.ln2.forward(&ht)?;
        let f = self.ff.apply(&b)?;
        Ok(ht.data().iter().zip(f.data()).map(|(a, b)| a + b).collect())
    }
}

impl Params for Block {
    fn tensors(&self) -> Vec<&Tensor2> {
        let mut v = self.ln1.tensors();
        v.extend(self.attn.tensors());
        v.extend(self.ln2.tensors());
        v.extend(self.ff.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor2> {
        let mut v = self.ln1.tensors_mut();
        v.extend(self.attn.tensors_mut());
        v.extend(self.ln2.tensors_mut());
        v.extend(self.ff.tensors_mut());
        v
    }

    fn names(&self) -> Vec<String> {
        let mut v = prefixed("ln1", &self.ln1);
        v.extend(prefixed("attn", &self.attn));
        v.extend(prefixed("ln2", &self.ln2));
        v.extend(prefixed("ff", &self.ff));
        v
    }

    fn zeros_like(&self) -> Self {
        Self {
            ln1: self.ln1.zeros_like(),
            attn: self.attn.zeros_like(),
            ln2: self.ln2.zeros_like(),
            ff: self.ff.zeros_like(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_diff_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn weighted_sum(y: &Tensor2, w: &Tensor2) -> f64 {
        y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Tensor2::randn(20, 13, 10.0, &mut rng);
        let p = softmax_rows(&x);
        for row in p.iter_rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let lp = log_softmax_rows(&x);
        for row in lp.iter_rows() {
            assert!((row.iter().map(|v| v.exp()).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn layer_norm_standardises_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut x = Tensor2::randn(8, 16, 3.0, &mut rng);
        x.data_mut().iter_mut().for_each(|v| *v += 5.0);
        let (_, cache) = LayerNorm::new(16).forward(&x).unwrap();
        for row in cache.normalized.iter_rows() {
            let mean = row.iter().sum::<f64>() / 16.0;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 16.0;
            assert!(mean.abs() < 1e-10);
            assert!((var - 1.0).abs() < 1e-8, "{var}");
        }
    }

    #[test]
    fn heads_must_divide_model_dim() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(MultiHeadAttention::new(6, 4, &mut rng).is_err());
        assert!(Block::new(6, 4, 8, &mut rng).is_err());
    }

    #[test]
    fn single_token_attention_is_value_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut attn = MultiHeadAttention::new(8, 2, &mut rng).unwrap();
        attn.bv = Tensor2::randn(1, 8, 1.0, &mut rng);
        attn.bo = Tensor2::randn(1, 8, 1.0, &mut rng);
        let x = Tensor2::randn(1, 8, 1.0, &mut rng);
        let (out, _) = attn.forward(&x, true).unwrap();
        let want = affine(&affine(&x, &attn.wv, &attn.bv).unwrap(), &attn.wo, &attn.bo).unwrap();
        assert!(out.max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn causal_mask_hides_future_positions() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let block = Block::new(8, 2, 16, &mut rng).unwrap();
        let x = Tensor2::randn(5, 8, 1.0, &mut rng);
        let (y, _) = block.forward(&x, true).unwrap();
        let mut x2 = x.clone();
        x2.row_mut(3).iter_mut().for_each(|v| *v += 1.7);
        let (y2, _) = block.forward(&x2, true).unwrap();
        for r in 0..3 {
            assert_eq!(y.row(r), y2.row(r));
        }
        assert_ne!(y.row(3), y2.row(3));
    }

    #[test]
    fn incremental_steps_match_full_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let block = Block::new(8, 2, 16, &mut rng).unwrap();
        let x = Tensor2::randn(6, 8, 1.0, &mut rng);
        let (y, _) = block.forward(&x, true).unwrap();
        let (_, prefix_cache) = block.forward(&x.gather_rows(&[0, 1, 2, 3]), true).unwrap();
        let prefix = MultiHeadAttention::kv_from_cache(&prefix_cache.attn);
        let mut extra = KvCache::default();
        for r in 4..6 {
            let yr = block.step(x.row(r), &prefix, &mut extra).unwrap();
            for (a, b) in yr.iter().zip(y.row(r)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn layer_norm_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut ln = LayerNorm::new(5);
        ln.gamma = Tensor2::randn(1, 5, 1.0, &mut rng);
        ln.beta = Tensor2::randn(1, 5, 1.0, &mut rng);
        let x = Tensor2::randn(3, 5, 1.0, &mut rng);
        let w = Tensor2::randn(3, 5, 1.0, &mut rng);
        let (_, cache) = ln.forward(&x).unwrap();
        let (dx, g) = ln.backward(&cache, &w);
        let err = finite_diff_check(
            |p| {
                let mut l = ln.clone();
                l.set_flat(p);
                weighted_sum(&l.forward(&x).unwrap().0, &w)
            },
            &ln.flat(),
            &g.flat(),
            1e-5,
        );
        assert!(err < 1e-6, "{err}");
        let err = finite_diff_check(
            |p| weighted_sum(&ln.forward(&Tensor2::from_vec(3, 5, p.to_vec()).unwrap()).unwrap().0, &w),
            x.data(),
            dx.data(),
            1e-5,
        );
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn block_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut block = Block::new(6, 2, 10, &mut rng).unwrap();
        for t in block.tensors_mut() {
            let (r, c) = t.shape();
            t.add_assign(&Tensor2::randn(r, c, 0.1, &mut rng));
        }
        let x = Tensor2::randn(4, 6, 1.0, &mut rng);
        let w = Tensor2::randn(4, 6, 1.0, &mut rng);
        let (_, cache) = block.forward(&x, true).unwrap();
        let (dx, g) = block.backward(&cache, &w).unwrap();
        let err = finite_diff_check(
            |p| {
                let mut b = block.clone();
                b.set_flat(p);
                weighted_sum(&b.forward(&x, true).unwrap().0, &w)
            },
            &block.flat(),
            &g.flat(),
            1e-5,
        );
        assert!(err < 1e-5, "params {err}");
        let err = finite_diff_check(
            |p| weighted_sum(&block.forward(&Tensor2::from_vec(4, 6, p.to_vec()).unwrap(), true).unwrap().0, &w),
            x.data(),
            dx.data(),
            1e-5,
        );
        assert!(err < 1e-5, "input {err}");
    }
}
