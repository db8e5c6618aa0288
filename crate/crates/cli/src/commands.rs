use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use cofirec::corpus::{load_corpus, save_corpus, synth_generate, Corpus};
use cofirec::eval::{build_tokenizer, evaluate, run_ablation_matrix, PreparedData};
use cofirec::featurize::EmbeddingTable;
use cofirec::generator::{train_generator, GeneratorModel};
use cofirec::numerics::checkpoint::Checkpoint;
use cofirec::theory::verify_proposition;
use cofirec::tokenizer::{analytics_csv, build_tokenizer_input, tokenize_corpus, LevelSource, TokenIndex, TokenizerModel};

use crate::config::RunConfig;
use crate::manifest::ManifestBuilder;

pub const ITEMS: &str = "items.jsonl";
pub const INTERACTIONS: &str = "interactions.jsonl";
pub const CF_EMBEDDINGS: &str = "cf_embeddings.txt";
pub const TOKENIZER_CKPT: &str = "tokenizer.ckpt";
pub const TOKENS: &str = "tokens.txt";
pub const GENERATOR_CKPT: &str = "generator.ckpt";

pub struct Ctx {
    pub config: RunConfig,
    pub out: PathBuf,
}

fn require(path: &Path) -> anyhow::Result<()> {
    if !path.exists() {
        bail!("missing upstream artifact: expected {}", path.display());
    }
    Ok(())
}

impl Ctx {
    fn manifest(&self, command: &str, seed: u64) -> ManifestBuilder {
        ManifestBuilder::new(command, &self.out, self.config.hash(), seed)
    }

    fn corpus_paths(&self) -> (PathBuf, PathBuf) {
        match (&self.config.corpus.items, &self.config.corpus.interactions) {
            (Some(i), Some(l)) => (i.clone(), l.clone()),
            _ => (self.out.join(ITEMS), self.out.join(INTERACTIONS)),
        }
    }

    fn load_corpus(&self, m: &mut ManifestBuilder) -> anyhow::Result<Corpus> {
        let (items, logs) = self.corpus_paths();
        require(&items)?;
        require(&logs)?;
        m.input(&items)?;
        m.input(&logs)?;
        Ok(load_corpus(&items, &logs)?)
    }

    fn artifact(&self, name: &str, m: &mut ManifestBuilder) -> anyhow::Result<PathBuf> {
        let p = self.out.join(name);
        require(&p)?;
        m.input(&p)?;
        Ok(p)
    }

    fn load_tokenizer(&self, m: &mut ManifestBuilder) -> anyhow::Result<TokenizerModel> {
        let p = self.artifact(TOKENIZER_CKPT, m)?;
        Ok(TokenizerModel::from_checkpoint(&Checkpoint::load(&p)?)?)
    }

    fn load_index(&self, m: &mut ManifestBuilder) -> anyhow::Result<TokenIndex> {
        let vocab = self.load_tokenizer(m)?.codebook_sizes();
        let p = self.artifact(TOKENS, m)?;
        Ok(TokenIndex::load(&p, &vocab)?)
    }
}

pub fn synth(ctx: &Ctx) -> anyhow::Result<()> {
    let cfg = &ctx.config.corpus.synth;
    let mut m = ctx.manifest("synth", cfg.seed);
    let corpus = synth_generate(cfg)?;
    save_corpus(&corpus, &ctx.out.join(ITEMS), &ctx.out.join(INTERACTIONS))?;
    m.written(ITEMS)?;
    m.written(INTERACTIONS)?;
    log::info!("wrote {} items and {} users", corpus.items.len(), corpus.logs.len());
    m.finish()
}

pub fn train_tokenizer(ctx: &Ctx) -> anyhow::Result<()> {
    let c = &ctx.config;
    let mut m = ctx.manifest("train-tokenizer", c.tokenizer.seed);
    let corpus = ctx.load_corpus(&mut m)?;
    let data = PreparedData::new(&corpus, &c.eval)?;
    let art = build_tokenizer(&data, &c.featurizer, &c.tokenizer)?;
    if let Some(cf) = &art.cf {
        m.output(CF_EMBEDDINGS, cf.to_text().as_bytes())?;
    }
    m.output(TOKENIZER_CKPT, art.trained.model.to_checkpoint().to_text().as_bytes())?;
    let mut curve = String::from("epoch,loss,reconstruction,commitment,reseeded_codes\n");
    for s in &art.trained.curve {
        writeln!(curve, "{},{},{},{},{}", s.epoch, s.loss, s.reconstruction, s.commitment, s.reseeded_codes)?;
    }
    m.output("tokenizer_curve.csv", curve.as_bytes())?;
    m.finish()
}

pub fn tokenize(ctx: &Ctx) -> anyhow::Result<()> {
    let c = &ctx.config;
    let mut m = ctx.manifest("tokenize", c.tokenizer.seed);
    let corpus = ctx.load_corpus(&mut m)?;
    let data = PreparedData::new(&corpus, &c.eval)?;
    let model = ctx.load_tokenizer(&mut m)?;
    let cf = if model.sources.contains(&LevelSource::Collaborative) {
        let p = ctx.artifact(CF_EMBEDDINGS, &mut m)?;
        Some(EmbeddingTable::load(&p)?)
    } else {
        None
    };
    let input = build_tokenizer_input(&data.corpus.items, cf.as_ref(), &c.featurizer)?;
    let index = tokenize_corpus(&model, &input)?;
    m.output(TOKENS, index.to_text().as_bytes())?;
    let labels: Option<HashMap<String, String>> = data
        .corpus
        .items
        .iter()
        .map(|i| i.category.clone().map(|c| (i.item_id.clone(), c)))
        .collect();
    m.output("tokenizer_analytics.csv", analytics_csv(&index, labels.as_ref())?.as_bytes())?;
    m.finish()
}

pub fn train_generator_cmd(ctx: &Ctx) -> anyhow::Result<()> {
    let c = &ctx.config;
    let mut m = ctx.manifest("train-generator", c.generator.seed);
    let corpus = ctx.load_corpus(&mut m)?;
    let data = PreparedData::new(&corpus, &c.eval)?;
    let index = ctx.load_index(&mut m)?;
    let model = GeneratorModel::new(&c.generator, index.vocab())?;
    let trained = train_generator(model, &data.training, &index, &c.generator)?;
    m.output(GENERATOR_CKPT, trained.model.to_checkpoint().to_text().as_bytes())?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    let mut curve = String::from("epoch,train_loss,valid_loss,valid_ndcg\n");
    for r in &trained.curve {
        writeln!(curve, "{},{},{},{}", r.epoch, r.train_loss, opt(r.valid_loss), opt(r.valid_ndcg))?;
    }
    m.output("generator_curve.csv", curve.as_bytes())?;
    log::info!("kept the checkpoint from epoch {}", trained.best_epoch);
    m.finish()
}

pub fn evaluate_cmd(ctx: &Ctx) -> anyhow::Result<()> {
    let c = &ctx.config;
    let mut m = ctx.manifest("evaluate", c.generator.seed);
    let corpus = ctx.load_corpus(&mut m)?;
    let data = PreparedData::new(&corpus, &c.eval)?;
    let index = ctx.load_index(&mut m)?;
    let p = ctx.artifact(GENERATOR_CKPT, &mut m)?;
    let model = GeneratorModel::from_checkpoint(&Checkpoint::load(&p)?)?;
    let fingerprint = c.experiment().fingerprint();
    let (ev, recs) = evaluate(&model, &index, &data, c.generator.beam_width, &fingerprint, c.generator.seed)?;
    let mut rows = String::from("user_id,rank,item_id,log_prob,target\n");
    for r in &recs {
        for (rank, (id, lp)) in r.items.iter().enumerate() {
            writeln!(rows, "{},{},{},{},{}", r.user_id, rank + 1, id, lp, r.target)?;
        }
    }
    m.output("recommendations.csv", rows.as_bytes())?;
    let mut metrics = String::from("split,metric,value\n");
    for (split, rep) in [("all", Some(&ev.overall)), ("warm", ev.warm.as_ref()), ("cold", ev.cold.as_ref())] {
        if let Some(rep) = rep {
            for (name, v) in rep.metrics() {
                writeln!(metrics, "{split},{name},{v}")?;
            }
        }
    }
    m.output("metrics.csv", metrics.as_bytes())?;
    m.output("metrics.json", (serde_json::to_string_pretty(&ev)? + "\n").as_bytes())?;
    log::info!("ndcg@10 {:.4} over {} users", ev.overall.ndcg_at_10, ev.overall.users);
    m.finish()
}

pub fn ablate(ctx: &Ctx) -> anyhow::Result<()> {
    let c = &ctx.config;
    let mut m = ctx.manifest("ablate", c.generator.seed);
    let corpus = ctx.load_corpus(&mut m)?;
    let table = run_ablation_matrix(&corpus, &c.experiment())?;
    m.output("ablation.csv", table.to_csv().as_bytes())?;
    m.output("ablation_summary.json", (serde_json::to_string_pretty(&table.summary())? + "\n").as_bytes())?;
    m.finish()
}

pub fn theory(ctx: &Ctx) -> anyhow::Result<()> {
    let grid = &ctx.config.theory;
    let mut m = ctx.manifest("theory", grid.seed);
    let report = verify_proposition(grid)?;
    m.output("theory.csv", report.to_csv().as_bytes())?;
    let mut psi = String::from("p,K,psi\n");
    for (p, v) in &report.psi {
        writeln!(psi, "{p},{},{v}", grid.psi_k)?;
    }
    m.output("psi.csv", psi.as_bytes())?;
    m.finish()?;
    let failures = report.failures();
    if !failures.is_empty() {
        bail!("strict inequality fails at {}", failures.join("; "));
    }
    if !report.psi_decreasing {
        bail!("psi is not monotone on the configured grid");
    }
    if let Some(r) = report.rows.iter().find(|r| !r.mc_agrees(report.sigmas)) {
        bail!("simulation disagrees with the closed forms at p={} V={} K={}", r.p, r.v, r.k);
    }
    Ok(())
}

pub fn ensure_dir(path: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}
