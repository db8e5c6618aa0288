use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::FeaturizerConfig;
use crate::error::Result;
use crate::numerics::Tensor2;

fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in parts {
        for &b in *p {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        // separator so ("ab","c") and ("a","bc") differ
        h ^= 0xff;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Feature-hashing text encoder followed by a fixed Gaussian random
/// projection and L2 normalisation.
#[derive(Debug, Clone)]
pub struct TextEmbedder {
    config: FeaturizerConfig,
    /// `hash_buckets × d_text`
    projection: Tensor2,
}

impl TextEmbedder {
    pub fn new(config: &FeaturizerConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.projection_seed);
        let projection = Tensor2::randn(config.hash_buckets, config.d_text, 1.0, &mut rng);
        Ok(Self {
            config: config.clone(),
            projection,
        })
    }

    pub fn dim(&self) -> usize {
        self.config.d_text
    }

    /// Words plus boundary-marked character n-grams of the lowercased text.
    fn features(&self, text: &str) -> Vec<String> {
        let lower = text.to_lowercase();
        let mut feats = Vec::new();
        for word in lower.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
            feats.push(format!("w:{word}"));
            let marked: Vec<char> = format!("<{word}>").chars().collect();
            for &n in &self.config.ngram_sizes {
                for gram in marked.windows(n) {
                    feats.push(gram.iter().collect());
                }
            }
        }
        feats
    }

    /// Embeds `text` as seen at hierarchy `level`; the level salts every
    /// hash so equal strings at different levels land in different buckets.
    pub fn embed(&self, text: &str, level: usize) -> Vec<f64> {
        let salt = (level as u64).to_le_bytes();
        let buckets = self.config.hash_buckets as u64;
        let mut out = vec![0.0; self.config.d_text];
        for f in self.features(text) {
            let h = fnv1a(&[&salt, f.as_bytes()]);
            let bucket = (h % buckets) as usize;
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            for (o, p) in out.iter_mut().zip(self.projection.row(bucket)) {
                *o += sign * p;
            }
        }
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            out.iter_mut().for_each(|v| *v /= norm);
        }
        out
    }
}

/// One-shot convenience wrapper around [`TextEmbedder`].
pub fn embed_text(text: &str, level: usize, config: &FeaturizerConfig) -> Result<Vec<f64>> {
    Ok(TextEmbedder::new(config)?.embed(text, level))
}
