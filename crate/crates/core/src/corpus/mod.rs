//! Item metadata, interaction logs, the evaluation protocol (k-core
//! filtering and leave-one-out splitting) and a synthetic corpus generator
//! with a planted category → type taxonomy.

mod hierarchy;
mod io;
mod protocol;
mod synth;

use serde::{Deserialize, Serialize};

pub use hierarchy::{build_hierarchy, build_hierarchies, ItemHierarchy, SEMANTIC_LEVELS};
pub use io::{load_corpus, parse_interactions, parse_items, save_corpus, write_interactions, write_items};
pub use protocol::{filter_min_interactions, split_leave_one_out, DatasetSplit, HeldOut, MAX_HISTORY, MIN_INTERACTIONS};
pub use synth::{synth_generate, synth_generate_labeled, PlantedLabel, SynthConfig};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub item_id: String,
    pub category: Option<String>,
    pub title: String,
    pub description: Option<String>,
}

/// One user's interactions, oldest first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionLog {
    pub user_id: String,
    pub item_ids: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub items: Vec<ItemRecord>,
    pub logs: Vec<InteractionLog>,
}

impl Corpus {
    pub fn new(items: Vec<ItemRecord>, logs: Vec<InteractionLog>) -> Self {
        Self { items, logs }
    }

    pub fn is_empty(&self) -> bool {
        self.logs.is_empty()
    }

    pub fn item(&self, id: &str) -> Option<&ItemRecord> {
        self.items.iter().find(|i| i.item_id == id)
    }
}
