use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{make_cold_split, ColdSplit, MetricReport};
use crate::corpus::{filter_min_interactions, split_leave_one_out, Corpus, DatasetSplit, HeldOut, InteractionLog, MIN_INTERACTIONS};
use crate::error::{Error, Result};
use crate::featurize::{train_cf_embeddings, EmbeddingTable, FeaturizerConfig};
use crate::generator::{apply_order_ablation, recommend, train_generator, GeneratorConfig, GeneratorModel, OrderMode, TrainedGenerator};
use crate::tokenizer::{build_tokenizer_input, tokenize_corpus, train_tokenizer, TokenIndex, TokenizerConfig, TokenizerInput, TrainedTokenizer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub seeds: Vec<u64>,
    /// Hold cold target items out of tokenizer and generator training and
    /// report warm and cold users separately.
    pub cold_start: bool,
    pub min_interactions: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            seeds: (1..=5).collect(),
            cold_start: false,
            min_interactions: MIN_INTERACTIONS,
        }
    }
}

/// Everything between a raw corpus and a metric report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub featurizer: FeaturizerConfig,
    pub tokenizer: TokenizerConfig,
    pub generator: GeneratorConfig,
    pub eval: EvalConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.featurizer.validate()?;
        self.tokenizer.validate()?;
        self.generator.validate()?;
        if self.eval.seeds.is_empty() {
            return Err(Error::Config("eval.seeds must not be empty".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

/// Filtered corpus, its split, and the training view with cold items
/// removed when cold-start evaluation is on.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub corpus: Corpus,
    pub split: DatasetSplit,
    pub cold: Option<ColdSplit>,
    /// Train logs and validation cases with cold items dropped.
    pub training: DatasetSplit,
}

impl PreparedData {
    pub fn new(raw: &Corpus, config: &EvalConfig) -> Result<Self> {
        let corpus = filter_min_interactions(raw, config.min_interactions);
        if corpus.is_empty() {
            return Err(Error::Config(format!("no users left after the {}-core filter", config.min_interactions)));
        }
        let split = split_leave_one_out(&corpus)?;
        if !config.cold_start {
            return Ok(Self {
                training: split.clone(),
                corpus,
                split,
                cold: None,
            });
        }
        let cold = make_cold_split(&corpus, &split.test);
        let excluded: HashSet<&str> = cold.cold_items.iter().map(String::as_str).collect();
        let keep = |ids: &[String]| -> Vec<String> { ids.iter().filter(|i| !excluded.contains(i.as_str())).cloned().collect() };
        let training = DatasetSplit {
            train: split
                .train
                .iter()
                .map(|l| InteractionLog {
                    user_id: l.user_id.clone(),
                    item_ids: keep(&l.item_ids),
                })
                .filter(|l| l.item_ids.len() >= 2)
                .collect(),
            valid: split
                .valid
                .iter()
                .filter(|h| !excluded.contains(h.target.as_str()))
                .map(|h| HeldOut {
                    history: keep(&h.history),
                    ..h.clone()
                })
                .filter(|h| !h.history.is_empty())
                .collect(),
            test: Vec::new(),
        };
        Ok(Self {
            corpus,
            split,
            cold: Some(cold),
            training,
        })
    }

    fn tokenizer_training_rows(&self, input: &TokenizerInput) -> Vec<usize> {
        let excluded: HashSet<&str> = self
            .cold
            .as_ref()
            .map(|c| c.cold_items.iter().map(String::as_str).collect())
            .unwrap_or_default();
        (0..input.len()).filter(|&i| !excluded.contains(input.ids[i].as_str())).collect()
    }
}

/// A trained tokenizer and the index it assigns to every corpus item.
#[derive(Debug, Clone)]
pub struct TokenizerArtifacts {
    pub cf: Option<EmbeddingTable>,
    pub input: TokenizerInput,
    pub trained: TrainedTokenizer,
    pub index: TokenIndex,
}

/// Builds inputs for all items (collaborative embeddings from the training
/// logs when `use_cf`), trains on the non-cold rows and tokenizes every item.
pub fn build_tokenizer(data: &PreparedData, featurizer: &FeaturizerConfig, tokenizer: &TokenizerConfig) -> Result<TokenizerArtifacts> {
    let ids: Vec<String> = data.corpus.items.iter().map(|i| i.item_id.clone()).collect();
    let cf = if tokenizer.use_cf {
        Some(train_cf_embeddings(&data.training.train, &ids, featurizer)?)
    } else {
        None
    };
    let input = build_tokenizer_input(&data.corpus.items, cf.as_ref(), featurizer)?;
    let rows = data.tokenizer_training_rows(&input);
    let fit = TokenizerInput::new(rows.iter().map(|&i| input.ids[i].clone()).collect(), input.select(&rows), input.sources.clone())?;
    let trained = train_tokenizer(&fit, tokenizer)?;
    let index = tokenize_corpus(&trained.model, &input)?;
    Ok(TokenizerArtifacts { cf, input, trained, index })
}

/// Top-10 items per held-out user.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UserRecommendations {
    pub user_id: String,
    pub target: String,
    pub items: Vec<(String, f64)>,
}

/// Beam-search recommendations for every held-out case, in input order.
pub fn recommend_all(model: &GeneratorModel, index: &TokenIndex, held: &[HeldOut], beam_width: usize) -> Result<Vec<UserRecommendations>> {
    held.par_iter()
        .map(|h| {
            Ok(UserRecommendations {
                user_id: h.user_id.clone(),
                target: h.target.clone(),
                items: recommend(model, &h.history, index, beam_width, 10)?,
            })
        })
        .collect()
}

/// Metric report over the users in `users` (all when `None`).
pub fn report_for(recs: &[UserRecommendations], users: Option<&[String]>, fingerprint: &str, seed: u64) -> MetricReport {
    let allowed: Option<HashSet<&str>> = users.map(|u| u.iter().map(String::as_str).collect());
    let ranked: Vec<(Vec<String>, &str)> = recs
        .iter()
        .filter(|r| allowed.as_ref().is_none_or(|a| a.contains(r.user_id.as_str())))
        .map(|r| (r.items.iter().map(|(id, _)| id.clone()).collect(), r.target.as_str()))
        .collect();
    MetricReport::from_rankings(ranked.iter().map(|(r, t)| (r.as_slice(), *t)), fingerprint, seed)
}

#[derive(Debug, Clone, Serialize)]
pub struct Evaluation {
    pub overall: MetricReport,
    pub warm: Option<MetricReport>,
    pub cold: Option<MetricReport>,
}

pub fn evaluate(
    model: &GeneratorModel,
    index: &TokenIndex,
    data: &PreparedData,
    beam_width: usize,
    fingerprint: &str,
    seed: u64,
) -> Result<(Evaluation, Vec<UserRecommendations>)> {
    let recs = recommend_all(model, index, &data.split.test, beam_width)?;
    let overall = report_for(&recs, None, fingerprint, seed);
    let (warm, cold) = match &data.cold {
        Some(c) => (
            Some(report_for(&recs, Some(&c.warm), fingerprint, seed)),
            Some(report_for(&recs, Some(&c.cold), fingerprint, seed)),
        ),
        None => (None, None),
    };
    Ok((Evaluation { overall, warm, cold }, recs))
}

/// One row of the ablation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    Reverse,
    Random,
    NoLevelPosition,
    NoCf,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::Full, Variant::Reverse, Variant::Random, Variant::NoLevelPosition, Variant::NoCf];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Reverse => "reverse",
            Variant::Random => "random",
            Variant::NoLevelPosition => "no_level_pos_emb",
            Variant::NoCf => "no_cf",
        }
    }

    pub fn order(self, seed: u64) -> OrderMode {
        match self {
            Variant::Reverse => OrderMode::Reverse,
            Variant::Random => OrderMode::Random(seed),
            _ => OrderMode::Identity,
        }
    }
}

/// Seeded copy of the configuration for one variant.
pub fn variant_config(config: &ExperimentConfig, variant: Variant, seed: u64) -> ExperimentConfig {
    let mut c = config.clone();
    c.tokenizer.seed = seed;
    c.generator.seed = seed;
    if variant == Variant::NoCf {
        c.tokenizer.use_cf = false;
    }
    if variant == Variant::NoLevelPosition {
        c.generator.use_level_embedding = false;
        c.generator.use_position_embedding = false;
    }
    c
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub index: TokenIndex,
    pub generator: TrainedGenerator,
    pub evaluation: Evaluation,
    pub recommendations: Vec<UserRecommendations>,
}

/// Trains the generator on `base` reordered for `variant` and evaluates it.
pub fn run_generator_stage(
    data: &PreparedData,
    base: &TokenIndex,
    config: &ExperimentConfig,
    variant: Variant,
    seed: u64,
) -> Result<RunOutput> {
    let cfg = variant_config(config, variant, seed);
    let index = apply_order_ablation(base, variant.order(seed))?;
    let model = GeneratorModel::new(&cfg.generator, index.vocab())?;
    let generator = train_generator(model, &data.training, &index, &cfg.generator)?;
    let (evaluation, recommendations) = evaluate(&generator.model, &index, data, cfg.generator.beam_width, &config.fingerprint(), seed)?;
    Ok(RunOutput {
        index,
        generator,
        evaluation,
        recommendations,
    })
}

/// Full pipeline for one variant and seed.
pub fn run_variant(data: &PreparedData, config: &ExperimentConfig, variant: Variant, seed: u64) -> Result<RunOutput> {
    let cfg = variant_config(config, variant, seed);
    let tok = build_tokenizer(data, &cfg.featurizer, &cfg.tokenizer)?;
    run_generator_stage(data, &tok.index, config, variant, seed)
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub seed: u64,
    pub report: MetricReport,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample standard deviation, 0 for a single seed.
    pub std: f64,
    pub seeds: usize,
}

impl AblationTable {
    pub fn reports(&self, variant: Variant) -> Vec<&MetricReport> {
        self.rows.iter().filter(|r| r.variant == variant).map(|r| &r.report).collect()
    }

    /// `variant,seed,metric,value`, rows in run order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,seed,metric,value\n");
        for r in &self.rows {
            for (m, v) in r.report.metrics() {
                out.push_str(&format!("{},{},{},{}\n", r.variant.name(), r.seed, m, v));
            }
        }
        out
    }

    /// Mean and spread across seeds, keyed by variant then metric.
    pub fn summary(&self) -> BTreeMap<&'static str, BTreeMap<&'static str, MetricSummary>> {
        let mut out = BTreeMap::new();
        for v in Variant::ALL {
            let reports = self.reports(v);
            if reports.is_empty() {
                continue;
            }
            let mut per_metric = BTreeMap::new();
            for (i, (name, _)) in reports[0].metrics().iter().enumerate() {
                let xs: Vec<f64> = reports.iter().map(|r| r.metrics()[i].1).collect();
                let n = xs.len() as f64;
                let mean = xs.iter().sum::<f64>() / n;
                let std = if xs.len() > 1 {
                    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
                } else {
                    0.0
                };
                per_metric.insert(*name, MetricSummary { mean, std, seeds: xs.len() });
            }
            out.insert(v.name(), per_metric);
        }
        out
    }
}

/// Runs `variants` for every seed. Variants that keep the collaborative
/// level share one tokenizer per seed.
pub fn run_ablation(corpus: &Corpus, config: &ExperimentConfig, variants: &[Variant], seeds: &[u64]) -> Result<AblationTable> {
    config.validate()?;
    let data = PreparedData::new(corpus, &config.eval)?;
    let mut table = AblationTable::default();
    for &seed in seeds {
        let mut shared: Option<TokenIndex> = None;
        for &variant in variants {
            let cfg = variant_config(config, variant, seed);
            let index = if variant == Variant::NoCf {
                build_tokenizer(&data, &cfg.featurizer, &cfg.tokenizer)?.index
            } else {
                match &shared {
                    Some(i) => i.clone(),
                    None => {
                        let i = build_tokenizer(&data, &cfg.featurizer, &cfg.tokenizer)?.index;
                        shared = Some(i.clone());
                        i
                    }
                }
            };
            let out = run_generator_stage(&data, &index, config, variant, seed)?;
            log::info!(
                "ablation {} seed {seed}: ndcg@10 {:.4}",
                variant.name(),
                out.evaluation.overall.ndcg_at_10
            );
            table.rows.push(AblationRow {
                variant,
                seed,
                report: out.evaluation.overall,
            });
        }
    }
    Ok(table)
}

/// All five variants over `config.eval.seeds`.
pub fn run_ablation_matrix(corpus: &Corpus, config: &ExperimentConfig) -> Result<AblationTable> {
    run_ablation(corpus, config, &Variant::ALL, &config.eval.seeds)
}
