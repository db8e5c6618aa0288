use serde::{Deserialize, Serialize};

use super::ItemRecord;
use crate::error::{Error, Result};

/// Number of text levels (category, title, description).
pub const SEMANTIC_LEVELS: usize = 3;

/// Coarse-to-fine text decomposition of an item: `levels[0]` is the
/// broadest field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemHierarchy {
    pub item_id: String,
    pub levels: Vec<String>,
}

fn non_empty(s: &Option<String>) -> Option<&str> {
    s.as_deref().map(str::trim).filter(|s| !s.is_empty())
}

/// Splits an item into `depth − 1` text levels: category, title and
/// description. A missing category becomes the lowercased first word of the
/// title; a missing description repeats the title.
pub fn build_hierarchy(item: &ItemRecord, depth: usize) -> Result<ItemHierarchy> {
    if depth != SEMANTIC_LEVELS + 1 {
        return Err(Error::Config(format!(
            "hierarchy depth {depth} unsupported: items carry {SEMANTIC_LEVELS} text fields, so depth must be {}",
            SEMANTIC_LEVELS + 1
        )));
    }
    let title = item.title.trim();
    if title.is_empty() {
        return Err(Error::InvalidItem {
            item: item.item_id.clone(),
            reason: "empty title".into(),
        });
    }
    let category = match non_empty(&item.category) {
        Some(c) => c.to_string(),
        None => title
            .split_whitespace()
            .next()
            .expect("title is non-empty")
            .to_lowercase(),
    };
    let description = non_empty(&item.description).unwrap_or(title).to_string();
    Ok(ItemHierarchy {
        item_id: item.item_id.clone(),
        levels: vec![category, title.to_string(), description],
    })
}

pub fn build_hierarchies(items: &[ItemRecord], depth: usize) -> Result<Vec<ItemHierarchy>> {
    items.iter().map(|i| build_hierarchy(i, depth)).collect()
}
