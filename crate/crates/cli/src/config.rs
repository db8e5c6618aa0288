use std::path::{Path, PathBuf};

use anyhow::Context;
use cofirec::corpus::SynthConfig;
use cofirec::eval::{EvalConfig, ExperimentConfig};
use cofirec::featurize::FeaturizerConfig;
use cofirec::generator::GeneratorConfig;
use cofirec::theory::TheoryGrid;
use cofirec::tokenizer::TokenizerConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SEED_ENV: &str = "COFIREC_SEED";

/// Raised for anything wrong with the configuration itself.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSection {
    /// Existing item metadata (JSON lines); defaults to the synthetic output.
    pub items: Option<PathBuf>,
    pub interactions: Option<PathBuf>,
    pub synth: SynthConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// When set, replaces every stage seed.
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub corpus: CorpusSection,
    pub featurizer: FeaturizerConfig,
    pub tokenizer: TokenizerConfig,
    pub generator: GeneratorConfig,
    pub eval: EvalConfig,
    pub theory: TheoryGrid,
}

impl RunConfig {
    /// Parses TOML; relative corpus paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError(format!("invalid config: {e}")))?;
        for p in [&mut cfg.corpus.items, &mut cfg.corpus.interactions].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).with_context(|| format!("loading {}", path.display()))
    }

    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.corpus.synth.seed = seed;
        self.tokenizer.seed = seed;
        self.generator.seed = seed;
        self.theory.seed = seed;
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let check = |r: cofirec::Result<()>| r.map_err(|e| ConfigError(e.to_string()));
        check(self.corpus.synth.validate())?;
        check(self.experiment().validate())?;
        if self.corpus.items.is_some() != self.corpus.interactions.is_some() {
            return Err(ConfigError("corpus.items and corpus.interactions must be set together".into()));
        }
        Ok(())
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            featurizer: self.featurizer.clone(),
            tokenizer: self.tokenizer.clone(),
            generator: self.generator.clone(),
            eval: self.eval.clone(),
        }
    }

    /// Hex SHA-256 of the effective configuration as JSON.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }
}
