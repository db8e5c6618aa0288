use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TokenizerConfig;
use crate::error::{Error, Result};
use crate::numerics::checkpoint::Checkpoint;
use crate::numerics::{prefixed, Mlp, Params, Tensor2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LevelSource {
    Semantic,
    Collaborative,
}

impl LevelSource {
    fn tag(self) -> &'static str {
        match self {
            LevelSource::Semantic => "sem",
            LevelSource::Collaborative => "cf",
        }
    }
}

/// Nearest code by squared Euclidean distance, lowest index on ties.
/// Returns the index and the distance.
pub fn quantize(h: &[f64], codebook: &Tensor2) -> (usize, f64) {
    debug_assert_eq!(h.len(), codebook.cols());
    let mut best = (0, f64::INFINITY);
    for (j, c) in codebook.iter_rows().enumerate() {
        let d: f64 = h.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenizerModel {
    pub f_sem: Mlp,
    pub g_sem: Mlp,
    pub f_cf: Option<Mlp>,
    pub g_cf: Option<Mlp>,
    /// One `V_k × code_dim` matrix per level.
    pub codebooks: Vec<Tensor2>,
    pub sources: Vec<LevelSource>,
    pub mu: f64,
}

/// Batch-averaged loss components. `encoder_commitment` already includes
/// the factor μ.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossTerms {
    pub reconstruction: f64,
    pub codebook_commitment: f64,
    pub encoder_commitment: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.reconstruction + self.codebook_commitment + self.encoder_commitment
    }
}

impl TokenizerModel {
    /// Randomly initialised encoders/decoders with zero codebooks.
    pub fn new<R: Rng + ?Sized>(config: &TokenizerConfig, sources: &[LevelSource], d_sem: usize, d_cf: Option<usize>, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if sources.len() != config.depth() {
            return Err(Error::shape("tokenizer levels", config.depth(), sources.len()));
        }
        let has_cf = sources.contains(&LevelSource::Collaborative);
        if has_cf != d_cf.is_some() {
            return Err(Error::Config("collaborative dimension must be given exactly when a collaborative level exists".into()));
        }
        let (h, c) = (config.hidden_dim, config.code_dim);
        let f_sem = Mlp::new(&[d_sem, h, c], rng)?;
        let g_sem = Mlp::new(&[c, h, d_sem], rng)?;
        let (f_cf, g_cf) = match d_cf {
            Some(d) => (Some(Mlp::new(&[d, h, c], rng)?), Some(Mlp::new(&[c, h, d], rng)?)),
            None => (None, None),
        };
        Ok(Self {
            f_sem,
            g_sem,
            f_cf,
            g_cf,
            codebooks: config.codebook_sizes.iter().map(|&v| Tensor2::zeros(v, c)).collect(),
            sources: sources.to_vec(),
            mu: config.mu,
        })
    }

    pub fn depth(&self) -> usize {
        self.codebooks.len()
    }

    pub fn codebook_sizes(&self) -> Vec<usize> {
        self.codebooks.iter().map(Tensor2::rows).collect()
    }

    pub fn code_dim(&self) -> usize {
        self.f_sem.output_dim()
    }

    pub fn encoder(&self, level: usize) -> &Mlp {
        match self.sources[level] {
            LevelSource::Semantic => &self.f_sem,
            LevelSource::Collaborative => self.f_cf.as_ref().expect("collaborative level has an encoder"),
        }
    }

    pub fn decoder(&self, level: usize) -> &Mlp {
        match self.sources[level] {
            LevelSource::Semantic => &self.g_sem,
            LevelSource::Collaborative => self.g_cf.as_ref().expect("collaborative level has a decoder"),
        }
    }

    fn decoder_mut(&mut self, level: usize) -> &mut Mlp {
        match self.sources[level] {
            LevelSource::Semantic => &mut self.g_sem,
            LevelSource::Collaborative => self.g_cf.as_mut().expect("collaborative level has a decoder"),
        }
    }

    fn encoder_mut(&mut self, level: usize) -> &mut Mlp {
        match self.sources[level] {
            LevelSource::Semantic => &mut self.f_sem,
            LevelSource::Collaborative => self.f_cf.as_mut().expect("collaborative level has an encoder"),
        }
    }

    /// Encoder outputs `h^(k)` for one level.
    pub fn encode(&self, level: usize, x: &Tensor2) -> Result<Tensor2> {
        self.encoder(level).apply(x)
    }

    /// Nearest-code indices for every row of every level.
    pub fn assign(&self, levels: &[Tensor2]) -> Result<Vec<Vec<usize>>> {
        self.check_levels(levels)?;
        (0..self.depth())
            .map(|k| {
                let h = self.encode(k, &levels[k])?;
                Ok(h.iter_rows().map(|r| quantize(r, &self.codebooks[k]).0).collect())
            })
            .collect()
    }

    fn check_levels(&self, levels: &[Tensor2]) -> Result<()> {
        if levels.len() != self.depth() {
            return Err(Error::shape("tokenizer batch levels", self.depth(), levels.len()));
        }
        let n = levels[0].rows();
        for (k, l) in levels.iter().enumerate() {
            if l.rows() != n {
                return Err(Error::shape(format!("tokenizer batch level {}", k + 1), n, l.rows()));
            }
            if l.cols() != self.encoder(k).input_dim() {
                return Err(Error::shape(format!("tokenizer level {} input", k + 1), self.encoder(k).input_dim(), l.cols()));
            }
        }
        Ok(())
    }

    /// Index of codebook `level` in `tensors()`.
    pub fn codebook_tensor_index(&self, level: usize) -> usize {
        self.num_mlp_tensors() + level
    }

    fn num_mlp_tensors(&self) -> usize {
        self.mlps().iter().map(|(_, m)| m.tensors().len()).sum()
    }

    fn mlps(&self) -> Vec<(&'static str, &Mlp)> {
        let mut v = vec![("f_sem", &self.f_sem), ("g_sem", &self.g_sem)];
        if let (Some(f), Some(g)) = (&self.f_cf, &self.g_cf) {
            v.push(("f_cf", f));
            v.push(("g_cf", g));
        }
        v
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let sources: Vec<&str> = self.sources.iter().map(|s| s.tag()).collect();
        Checkpoint::from_params(self)
            .with_meta("kind", "tokenizer")
            .with_meta("mu", self.mu.to_string())
            .with_meta("sources", sources.join(","))
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let meta = |k: &str| {
            ckpt.meta
                .get(k)
                .ok_or_else(|| Error::Checkpoint(format!("missing metadata {k:?}")))
        };
        if meta("kind")? != "tokenizer" {
            return Err(Error::Checkpoint("not a tokenizer checkpoint".into()));
        }
        let mu: f64 = meta("mu")?
            .parse()
            .map_err(|_| Error::Checkpoint("bad mu".into()))?;
        let sources = meta("sources")?
            .split(',')
            .map(|s| match s {
                "sem" => Ok(LevelSource::Semantic),
                "cf" => Ok(LevelSource::Collaborative),
                other => Err(Error::Checkpoint(format!("unknown level source {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let tensor = |name: &str| {
            ckpt.tensors
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
        };
        let mlp = |prefix: &str| -> Result<Mlp> {
            let mut layers = Vec::new();
            while let Ok(weight) = tensor(&format!("{prefix}.{}.weight", layers.len())) {
                let bias = tensor(&format!("{prefix}.{}.bias", layers.len()))?;
                layers.push(crate::numerics::Layer {
                    weight,
                    bias,
                    activation: crate::numerics::Activation::Relu,
                });
            }
            if let Some(last) = layers.last_mut() {
                last.activation = crate::numerics::Activation::Identity;
            } else {
                return Err(Error::Checkpoint(format!("missing tensors for {prefix}")));
            }
            Mlp::from_layers(layers)
        };
        let has_cf = sources.contains(&LevelSource::Collaborative);
        let model = Self {
            f_sem: mlp("f_sem")?,
            g_sem: mlp("g_sem")?,
            f_cf: if has_cf { Some(mlp("f_cf")?) } else { None },
            g_cf: if has_cf { Some(mlp("g_cf")?) } else { None },
            codebooks: (0..sources.len())
                .map(|k| tensor(&format!("codebook.{}", k + 1)))
                .collect::<Result<_>>()?,
            sources,
            mu,
        };
        let mut check = model.clone();
        ckpt.load_into(&mut check)?;
        Ok(model)
    }
}

impl Params for TokenizerModel {
    fn tensors(&self) -> Vec<&Tensor2> {
        let mut v: Vec<&Tensor2> = Vec::new();
        v.extend(self.f_sem.tensors());
        v.extend(self.g_sem.tensors());
        if let (Some(f), Some(g)) = (&self.f_cf, &self.g_cf) {
            v.extend(f.tensors());
            v.extend(g.tensors());
        }
        v.extend(self.codebooks.iter());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor2> {
        let mut v: Vec<&mut Tensor2> = Vec::new();
        v.extend(self.f_sem.tensors_mut());
        v.extend(self.g_sem.tensors_mut());
        if let (Some(f), Some(g)) = (&mut self.f_cf, &mut self.g_cf) {
            v.extend(f.tensors_mut());
            v.extend(g.tensors_mut());
        }
        v.extend(self.codebooks.iter_mut());
        v
    }

    fn names(&self) -> Vec<String> {
        let mut v: Vec<String> = self.mlps().into_iter().flat_map(|(p, m)| prefixed(p, m)).collect();
        v.extend((1..=self.codebooks.len()).map(|k| format!("codebook.{k}")));
        v
    }

    fn zeros_like(&self) -> Self {
        Self {
            f_sem: self.f_sem.zeros_like(),
            g_sem: self.g_sem.zeros_like(),
            f_cf: self.f_cf.as_ref().map(Params::zeros_like),
            g_cf: self.g_cf.as_ref().map(Params::zeros_like),
            codebooks: self.codebooks.iter().map(Tensor2::zeros_like).collect(),
            sources: self.sources.clone(),
            mu: self.mu,
        }
    }
}

/// Loss and gradients with nearest-code assignments recomputed from the
/// current encoders. Also returns the assignments used.
pub fn tokenizer_loss(model: &TokenizerModel, levels: &[Tensor2]) -> Result<(LossTerms, TokenizerModel, Vec<Vec<usize>>)> {
    let assignments = model.assign(levels)?;
    let (terms, grads) = tokenizer_loss_with_assignments(model, levels, &assignments)?;
    Ok((terms, grads, assignments))
}

/// Loss and gradients for fixed code assignments `assignments[k][b]`.
///
/// Per item and level: `‖e − g(c)‖² + ‖sg[h] − c‖² + μ‖h − sg[c]‖²`, averaged
/// over the batch. The reconstruction gradient reaching the decoder input is
/// applied both to the selected code and, straight through, to `h`.
pub fn tokenizer_loss_with_assignments(
    model: &TokenizerModel,
    levels: &[Tensor2],
    assignments: &[Vec<usize>],
) -> Result<(LossTerms, TokenizerModel)> {
    model.check_levels(levels)?;
    let n = levels[0].rows();
    if n == 0 {
        return Err(Error::Config("tokenizer loss needs a non-empty batch".into()));
    }
    let scale = 1.0 / n as f64;
    let mut terms = LossTerms::default();
    let mut grads = model.zeros_like();
    for (k, x) in levels.iter().enumerate() {
        let idx = &assignments[k];
        if idx.len() != n {
            return Err(Error::shape(format!("assignments for level {}", k + 1), n, idx.len()));
        }
        if let Some(&bad) = idx.iter().find(|&&j| j >= model.codebooks[k].rows()) {
            return Err(Error::TokenRange {
                level: k + 1,
                token: bad,
                vocab: model.codebooks[k].rows(),
            });
        }
        let (h, enc_cache) = model.encoder(k).forward(x)?;
        let c = model.codebooks[k].gather_rows(idx);
        let (r, dec_cache) = model.decoder(k).forward(&c)?;

        let mut dr = r;
        dr.add_scaled(x, -1.0);
        terms.reconstruction += dr.sq_norm() * scale;
        dr.scale(2.0 * scale);
        let (dc, dec_grads) = model.decoder(k).backward(&dec_cache, &dr)?;
        grads.decoder_mut(k).accumulate(&dec_grads, 1.0);

        let mut c_minus_h = c;
        c_minus_h.add_scaled(&h, -1.0);
        let commit = c_minus_h.sq_norm() * scale;
        terms.codebook_commitment += commit;
        terms.encoder_commitment += model.mu * commit;

        let cb = &mut grads.codebooks[k];
        for (b, &j) in idx.iter().enumerate() {
            for ((g, &d), &cm) in cb.row_mut(j).iter_mut().zip(dc.row(b)).zip(c_minus_h.row(b)) {
                *g += d + 2.0 * scale * cm;
            }
        }

        let mut dh = dc;
        dh.add_scaled(&c_minus_h, -2.0 * model.mu * scale);
        let (_, enc_grads) = model.encoder(k).backward(&enc_cache, &dh)?;
        grads.encoder_mut(k).accumulate(&enc_grads, 1.0);
    }
    if !terms.total().is_finite() || !grads.all_finite() {
        return Err(Error::NonFinite("tokenizer loss".into()));
    }
    Ok((terms, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_check, Activation, Layer};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_match_has_zero_distance() {
        let cb = Tensor2::from_rows(&[vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, 5.0], vec![-1.0, 0.5]]).unwrap();
        assert_eq!(quantize(&[-1.0, 0.5], &cb), (3, 0.0));
    }

    #[test]
    fn nearest_of_two_codes() {
        // distances 0.81 + 0.64 = 1.45 and 0.01 + 0.04 = 0.05
        let cb = Tensor2::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let (j, d) = quantize(&[0.9, 0.8], &cb);
        assert_eq!(j, 1);
        assert!((d - 0.05).abs() < 1e-12);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let cb = Tensor2::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(quantize(&[0.0, 0.0], &cb).0, 0);
        assert_eq!(quantize(&[1.0, 0.0], &cb).0, 0);
    }

    fn toy_config() -> TokenizerConfig {
        TokenizerConfig {
            codebook_sizes: vec![3, 4, 5],
            code_dim: 3,
            hidden_dim: 4,
            mu: 0.25,
            ..TokenizerConfig::default()
        }
    }

    fn toy(seed: u64) -> (TokenizerModel, Vec<Tensor2>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sources = [LevelSource::Semantic, LevelSource::Semantic, LevelSource::Collaborative];
        let mut m = TokenizerModel::new(&toy_config(), &sources, 5, Some(4), &mut rng).unwrap();
        for cb in &mut m.codebooks {
            *cb = Tensor2::randn(cb.rows(), cb.cols(), 1.0, &mut rng);
        }
        let levels = vec![
            Tensor2::randn(6, 5, 1.0, &mut rng),
            Tensor2::randn(6, 5, 1.0, &mut rng),
            Tensor2::randn(6, 4, 1.0, &mut rng),
        ];
        (m, levels)
    }

    #[test]
    fn names_line_up_with_tensors() {
        let (m, _) = toy(1);
        assert_eq!(m.names().len(), m.tensors().len());
        let k = m.codebook_tensor_index(1);
        assert_eq!(m.names()[k], "codebook.2");
        assert_eq!(m.tensors()[k].shape(), (4, 3));
    }

    #[test]
    fn commitment_vanishes_when_encoder_hits_codes() {
        let (mut m, levels) = toy(2);
        for k in 0..3 {
            let h = m.encode(k, &levels[k]).unwrap();
            m.codebooks[k] = Tensor2::zeros(h.rows() + 1, h.cols());
            for b in 0..h.rows() {
                m.codebooks[k].row_mut(b + 1).copy_from_slice(h.row(b));
            }
        }
        let (terms, _, assign) = tokenizer_loss(&m, &levels).unwrap();
        assert_eq!(assign[0], vec![1, 2, 3, 4, 5, 6]);
        assert!(terms.codebook_commitment.abs() < 1e-24);
        assert!(terms.encoder_commitment.abs() < 1e-24);
    }

    #[test]
    fn without_mu_encoder_sees_only_reconstruction_gradient() {
        let (mut m, levels) = toy(3);
        m.mu = 0.0;
        let (_, grads, assign) = tokenizer_loss(&m, &levels).unwrap();
        let mut want = m.f_sem.zeros_like();
        for k in 0..2 {
            let c = m.codebooks[k].gather_rows(&assign[k]);
            let x = &levels[k];
            let (r, dcache) = m.g_sem.forward(&c).unwrap();
            let mut dr = r;
            dr.add_scaled(x, -1.0);
            dr.scale(2.0 / x.rows() as f64);
            let (dc, _) = m.g_sem.backward(&dcache, &dr).unwrap();
            let (_, ecache) = m.f_sem.forward(x).unwrap();
            let (_, g) = m.f_sem.backward(&ecache, &dc).unwrap();
            want.accumulate(&g, 1.0);
        }
        let diff: f64 = want.flat().iter().zip(grads.f_sem.flat()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-14);
    }

    #[test]
    fn decoder_perturbation_leaves_commitment_unchanged() {
        let (m, levels) = toy(4);
        let (base, _, assign) = tokenizer_loss(&m, &levels).unwrap();
        let mut p = m.clone();
        p.g_sem.layers[0].weight.data_mut()[0] += 0.3;
        let (moved, _) = tokenizer_loss_with_assignments(&p, &levels, &assign).unwrap();
        assert_ne!(base.reconstruction, moved.reconstruction);
        assert_eq!(base.codebook_commitment, moved.codebook_commitment);
        assert_eq!(base.encoder_commitment, moved.encoder_commitment);
    }

    #[test]
    fn codebook_gradient_is_reconstruction_plus_pull_towards_encoder() {
        let (m, levels) = toy(5);
        let (_, grads, assign) = tokenizer_loss(&m, &levels).unwrap();
        // Remove the reconstruction part with decoders that ignore their input.
        let mut flat = m.clone();
        for dec in [&mut flat.g_sem, flat.g_cf.as_mut().unwrap()] {
            dec.layers[0].weight.fill(0.0);
        }
        let (_, g0) = tokenizer_loss_with_assignments(&flat, &levels, &assign).unwrap();
        for k in 0..3 {
            let h = m.encode(k, &levels[k]).unwrap();
            let mut want = m.codebooks[k].zeros_like();
            for (b, &j) in assign[k].iter().enumerate() {
                for ((w, c), hv) in want.row_mut(j).iter_mut().zip(m.codebooks[k].row(j)).zip(h.row(b)) {
                    *w += 2.0 * (c - hv) / 6.0;
                }
            }
            assert!(g0.codebooks[k].max_abs_diff(&want) < 1e-14);
        }
        assert!(grads.codebooks.iter().zip(&g0.codebooks).any(|(a, b)| a.max_abs_diff(b) > 1e-6));
    }

    /// Value whose true gradient equals the routed gradient of the
    /// differentiable paths, with assignments and stop-gradient sides frozen.
    fn surrogate(m: &TokenizerModel, base: &TokenizerModel, levels: &[Tensor2], assign: &[Vec<usize>]) -> f64 {
        let n = levels[0].rows() as f64;
        let mut total = 0.0;
        for (k, x) in levels.iter().enumerate() {
            let h0 = base.encode(k, x).unwrap();
            let c0 = base.codebooks[k].gather_rows(&assign[k]);
            let c = m.codebooks[k].gather_rows(&assign[k]);
            let h = m.encode(k, x).unwrap();
            // Decoder and codebook paths.
            let r = m.decoder(k).apply(&c).unwrap();
            let mut d = r;
            d.add_scaled(x, -1.0);
            total += d.sq_norm() / n;
            let mut cm = c.clone();
            cm.add_scaled(&h0, -1.0);
            total += cm.sq_norm() / n;
            // Encoder path: straight-through decoder input and commitment.
            let mut st = h.clone();
            st.add_scaled(&c0, 1.0);
            st.add_scaled(&h0, -1.0);
            let r_st = base.decoder(k).apply(&st).unwrap();
            let mut d_st = r_st;
            d_st.add_scaled(x, -1.0);
            total += d_st.sq_norm() / n;
            let mut hc = h;
            hc.add_scaled(&c0, -1.0);
            total += m.mu * hc.sq_norm() / n;
        }
        total
    }

    #[test]
    fn gradients_match_finite_differences_with_frozen_assignments() {
        for seed in 0..3 {
            let (m, levels) = toy(10 + seed);
            let (_, grads, assign) = tokenizer_loss(&m, &levels).unwrap();
            let err = finite_diff_check(
                |p| {
                    let mut q = m.clone();
                    q.set_flat(p);
                    surrogate(&q, &m, &levels, &assign)
                },
                &m.flat(),
                &grads.flat(),
                1e-6,
            );
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    /// One item, two levels (semantic + collaborative), single-layer linear
    /// maps, every dimension 2: loss and gradients written out by hand.
    #[test]
    fn toy_instance_matches_straight_line_implementation() {
        let lin = |w: [[f64; 2]; 2], b: [f64; 2]| {
            Mlp::from_layers(vec![Layer {
                weight: Tensor2::from_rows(&[w[0].to_vec(), w[1].to_vec()]).unwrap(),
                bias: Tensor2::from_rows(&[b.to_vec()]).unwrap(),
                activation: Activation::Identity,
            }])
            .unwrap()
        };
        let m = TokenizerModel {
            f_sem: lin([[0.5, -0.2], [0.1, 0.3]], [0.05, -0.1]),
            g_sem: lin([[1.2, 0.4], [-0.3, 0.8]], [0.0, 0.2]),
            f_cf: Some(lin([[-0.7, 0.2], [0.6, 0.9]], [0.1, 0.0])),
            g_cf: Some(lin([[0.3, -0.5], [0.2, 1.1]], [-0.2, 0.1])),
            codebooks: vec![
                Tensor2::from_rows(&[vec![0.3, 0.1], vec![-0.5, 0.4]]).unwrap(),
                Tensor2::from_rows(&[vec![1.0, -1.0], vec![0.2, 0.6]]).unwrap(),
            ],
            sources: vec![LevelSource::Semantic, LevelSource::Collaborative],
            mu: 0.25,
        };
        let e = [[0.8, -0.6], [0.4, 1.3]];
        let levels = vec![
            Tensor2::from_rows(&[e[0].to_vec()]).unwrap(),
            Tensor2::from_rows(&[e[1].to_vec()]).unwrap(),
        ];
        let (terms, grads, assign) = tokenizer_loss(&m, &levels).unwrap();

        // y = x·W + b with W stored in×out.
        let affine = |x: [f64; 2], l: &Layer| -> [f64; 2] {
            let w = &l.weight;
            [
                x[0] * w.get(0, 0) + x[1] * w.get(1, 0) + l.bias.get(0, 0),
                x[0] * w.get(0, 1) + x[1] * w.get(1, 1) + l.bias.get(0, 1),
            ]
        };
        let mut loss = 0.0;
        for k in 0..2 {
            let (f, g) = (&m.encoder(k).layers[0], &m.decoder(k).layers[0]);
            let x = e[k];
            let h = affine(x, f);
            let d0 = (h[0] - m.codebooks[k].get(0, 0)).powi(2) + (h[1] - m.codebooks[k].get(0, 1)).powi(2);
            let d1 = (h[0] - m.codebooks[k].get(1, 0)).powi(2) + (h[1] - m.codebooks[k].get(1, 1)).powi(2);
            let j = if d1 < d0 { 1 } else { 0 };
            assert_eq!(assign[k][0], j);
            let c = [m.codebooks[k].get(j, 0), m.codebooks[k].get(j, 1)];
            let r = affine(c, g);
            let dr = [2.0 * (r[0] - x[0]), 2.0 * (r[1] - x[1])];
            let commit = (c[0] - h[0]).powi(2) + (c[1] - h[1]).powi(2);
            loss += (r[0] - x[0]).powi(2) + (r[1] - x[1]).powi(2) + commit * (1.0 + m.mu);

            let gd = &grads.decoder(k).layers[0];
            let ge = &grads.encoder(k).layers[0];
            // decoder: dW[i][o] = c[i]·dr[o], db = dr
            let dc = [
                g.weight.get(0, 0) * dr[0] + g.weight.get(0, 1) * dr[1],
                g.weight.get(1, 0) * dr[0] + g.weight.get(1, 1) * dr[1],
            ];
            let dh = [dc[0] + 2.0 * m.mu * (h[0] - c[0]), dc[1] + 2.0 * m.mu * (h[1] - c[1])];
            for i in 0..2 {
                for o in 0..2 {
                    assert!((gd.weight.get(i, o) - c[i] * dr[o]).abs() < 1e-10);
                    assert!((ge.weight.get(i, o) - x[i] * dh[o]).abs() < 1e-10);
                }
                assert!((gd.bias.get(0, i) - dr[i]).abs() < 1e-10);
                assert!((ge.bias.get(0, i) - dh[i]).abs() < 1e-10);
                let gc = dc[i] + 2.0 * (c[i] - h[i]);
                assert!((grads.codebooks[k].get(j, i) - gc).abs() < 1e-10);
                assert_eq!(grads.codebooks[k].get(1 - j, i), 0.0);
            }
        }
        assert!((terms.total() - loss).abs() < 1e-10);
    }

    #[test]
    fn checkpoint_round_trip() {
        let (m, _) = toy(6);
        let back = TokenizerModel::from_checkpoint(&Checkpoint::parse(&m.to_checkpoint().to_text()).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
