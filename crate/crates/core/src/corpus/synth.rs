//! Reproducible synthetic corpora with a planted two-level taxonomy.
//!
//! Every item belongs to one *type*, every type to one *category*. The
//! category name is the item's category field, the type name appears in its
//! title and description, and the remaining words are item specific. Users
//! pick a category, then a type inside it, then items of that type
//! (popularity-weighted); at each step the intent is resampled with
//! probability `intent_drift_probability`.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, InteractionLog, ItemRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub n_categories: usize,
    pub n_types_per_category: usize,
    pub seed: u64,
    /// Inclusive `[min, max]` number of interactions per user.
    pub session_length_range: (usize, usize),
    pub intent_drift_probability: f64,
    /// Within a type, item `r` (0-based popularity rank) is drawn with
    /// weight `1 / (r + 1)^popularity_exponent`.
    pub popularity_exponent: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_users: 300,
            n_items: 200,
            n_categories: 4,
            n_types_per_category: 5,
            seed: 1,
            session_length_range: (6, 12),
            intent_drift_probability: 0.1,
            popularity_exponent: 1.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_users", self.n_users),
            ("n_items", self.n_items),
            ("n_categories", self.n_categories),
            ("n_types_per_category", self.n_types_per_category),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("synth.{name} must be ≥ 1")));
        }
        let (lo, hi) = self.session_length_range;
        if lo == 0 || lo > hi {
            return Err(Error::Config(format!("synth.session_length_range ({lo}, {hi}) must satisfy 1 ≤ min ≤ max")));
        }
        if !(0.0..=1.0).contains(&self.intent_drift_probability) {
            return Err(Error::Config("synth.intent_drift_probability must lie in [0, 1]".into()));
        }
        if !self.popularity_exponent.is_finite() || self.popularity_exponent < 0.0 {
            return Err(Error::Config("synth.popularity_exponent must be finite and ≥ 0".into()));
        }
        let n_types = self.n_categories * self.n_types_per_category;
        if self.n_items < n_types {
            return Err(Error::Config(format!(
                "synth.n_items ({}) < n_categories × n_types_per_category ({n_types})",
                self.n_items
            )));
        }
        Ok(())
    }
}

const ONSETS: &[&str] = &[
    "b", "c", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r", "s", "t", "v", "w", "z", "br", "cr", "dr", "gr",
    "pl", "st", "tr", "sk",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou", "ea"];
const CODAS: &[&str] = &["", "", "n", "r", "l", "s", "x", "m", "k"];
const CONNECTIVES: &[&str] = &["with", "for", "and", "in", "featuring", "plus"];

fn pseudo_word<R: Rng>(rng: &mut R, syllables: usize) -> String {
    (0..syllables)
        .map(|_| {
            format!(
                "{}{}{}",
                ONSETS.choose(rng).unwrap(),
                VOWELS.choose(rng).unwrap(),
                CODAS.choose(rng).unwrap()
            )
        })
        .collect()
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Draws `n` distinct pseudo-words.
fn distinct_words<R: Rng>(rng: &mut R, n: usize, syllables: usize, taken: &mut std::collections::HashSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w = pseudo_word(rng, syllables);
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

/// Planted labels of a synthetic item.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlantedLabel {
    pub category: usize,
    pub item_type: usize,
}

/// Like [`synth_generate`], also returning the planted label of every item.
pub fn synth_generate_labeled(config: &SynthConfig) -> Result<(Corpus, Vec<PlantedLabel>)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n_types = config.n_categories * config.n_types_per_category;
    let mut taken = std::collections::HashSet::new();

    let category_words = distinct_words(&mut rng, 2 * config.n_categories, 2, &mut taken);
    let category_names: Vec<String> = category_words
        .chunks(2)
        .map(|w| format!("{} {}", capitalize(&w[0]), capitalize(&w[1])))
        .collect();
    let type_words = distinct_words(&mut rng, n_types, 2, &mut taken);
    let brands = distinct_words(&mut rng, 24, 2, &mut taken);

    let mut items = Vec::with_capacity(config.n_items);
    let mut labels = Vec::with_capacity(config.n_items);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_types];
    for i in 0..config.n_items {
        let t = i % n_types;
        let c = t / config.n_types_per_category;
        let own = distinct_words(&mut rng, 4, 3, &mut taken);
        let brand = capitalize(brands.choose(&mut rng).unwrap());
        let title = format!("{brand} {} {} {}", capitalize(&type_words[t]), capitalize(&own[0]), rng.gen_range(100..1000));
        let description = format!(
            "{} {} {} {} {} {} {}",
            type_words[t],
            own[1],
            CONNECTIVES.choose(&mut rng).unwrap(),
            own[2],
            own[3],
            category_words[2 * c],
            CONNECTIVES.choose(&mut rng).unwrap(),
        );
        items.push(ItemRecord {
            item_id: format!("i{i:05}"),
            category: Some(category_names[c].clone()),
            title,
            description: Some(description),
        });
        labels.push(PlantedLabel { category: c, item_type: t });
        members[t].push(i);
    }

    // Popularity ranks inside each type are a seeded shuffle of its members.
    let samplers: Vec<(Vec<usize>, WeightedIndex<f64>)> = members
        .into_iter()
        .map(|mut m| {
            m.shuffle(&mut rng);
            let w: Vec<f64> = (0..m.len())
                .map(|r| 1.0 / ((r + 1) as f64).powf(config.popularity_exponent))
                .collect();
            let dist = WeightedIndex::new(w).expect("every type has ≥ 1 item");
            (m, dist)
        })
        .collect();

    let (lo, hi) = config.session_length_range;
    let mut logs = Vec::with_capacity(config.n_users);
    let draw_intent = |rng: &mut ChaCha8Rng| {
        let c = rng.gen_range(0..config.n_categories);
        c * config.n_types_per_category + rng.gen_range(0..config.n_types_per_category)
    };
    for u in 0..config.n_users {
        let len = rng.gen_range(lo..=hi);
        let mut t = draw_intent(&mut rng);
        let mut seq = Vec::with_capacity(len);
        for step in 0..len {
            if step > 0 && rng.gen_bool(config.intent_drift_probability) {
                t = draw_intent(&mut rng);
            }
            let (m, dist) = &samplers[t];
            seq.push(items[m[dist.sample(&mut rng)]].item_id.clone());
        }
        logs.push(InteractionLog {
            user_id: format!("u{u:05}"),
            item_ids: seq,
        });
    }
    Ok((Corpus { items, logs }, labels))
}

/// Generates a corpus; equal configs give equal corpora.
pub fn synth_generate(config: &SynthConfig) -> Result<Corpus> {
    synth_generate_labeled(config).map(|(c, _)| c)
}
