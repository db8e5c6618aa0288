//! Line-delimited JSON corpus files.
//!
//! Items: `{"item_id": .., "category": .., "title": .., "description": ..}`,
//! where empty or absent fields mean missing.
//! Interactions: `{"user_id": .., "item_ids": [..]}` in chronological order.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Corpus, InteractionLog, ItemRecord};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct ItemLine {
    item_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    description: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct InteractionLine {
    user_id: String,
    item_ids: Vec<String>,
}

fn blank_to_none(s: Option<String>) -> Option<String> {
    s.filter(|v| !v.trim().is_empty())
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn non_blank_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

pub fn parse_items(text: &str, file: &str) -> Result<Vec<ItemRecord>> {
    let mut seen = HashSet::new();
    let mut items = Vec::new();
    for (line, raw) in non_blank_lines(text) {
        let parsed: ItemLine = serde_json::from_str(raw).map_err(|e| Error::Parse {
            file: file.to_string(),
            line,
            message: e.to_string(),
        })?;
        let title = blank_to_none(parsed.title).ok_or_else(|| Error::Parse {
            file: file.to_string(),
            line,
            message: format!("item {:?} has no title", parsed.item_id),
        })?;
        if parsed.item_id.is_empty() || parsed.item_id.contains(char::is_whitespace) {
            return Err(Error::Parse {
                file: file.to_string(),
                line,
                message: format!("item id {:?} must be non-empty without whitespace", parsed.item_id),
            });
        }
        if !seen.insert(parsed.item_id.clone()) {
            return Err(Error::DuplicateItem(parsed.item_id));
        }
        items.push(ItemRecord {
            item_id: parsed.item_id,
            category: blank_to_none(parsed.category),
            title,
            description: blank_to_none(parsed.description),
        });
    }
    Ok(items)
}

pub fn parse_interactions(text: &str, file: &str) -> Result<Vec<InteractionLog>> {
    non_blank_lines(text)
        .map(|(line, raw)| {
            let parsed: InteractionLine = serde_json::from_str(raw).map_err(|e| Error::Parse {
                file: file.to_string(),
                line,
                message: e.to_string(),
            })?;
            Ok(InteractionLog {
                user_id: parsed.user_id,
                item_ids: parsed.item_ids,
            })
        })
        .collect()
}

/// Reads both files and checks that every interaction references a known
/// item.
pub fn load_corpus(items_path: &Path, interactions_path: &Path) -> Result<Corpus> {
    let items = parse_items(&read(items_path)?, &items_path.display().to_string())?;
    let logs = parse_interactions(&read(interactions_path)?, &interactions_path.display().to_string())?;
    let known: HashSet<&str> = items.iter().map(|i| i.item_id.as_str()).collect();
    for log in &logs {
        if let Some(bad) = log.item_ids.iter().find(|id| !known.contains(id.as_str())) {
            return Err(Error::UnknownItem {
                user: log.user_id.clone(),
                item: bad.clone(),
            });
        }
    }
    Ok(Corpus { items, logs })
}

pub fn write_items(items: &[ItemRecord]) -> String {
    let mut out = String::new();
    for i in items {
        let line = ItemLine {
            item_id: i.item_id.clone(),
            category: i.category.clone(),
            title: Some(i.title.clone()),
            description: i.description.clone(),
        };
        let _ = writeln!(out, "{}", serde_json::to_string(&line).expect("plain strings serialize"));
    }
    out
}

pub fn write_interactions(logs: &[InteractionLog]) -> String {
    let mut out = String::new();
    for l in logs {
        let line = InteractionLine {
            user_id: l.user_id.clone(),
            item_ids: l.item_ids.clone(),
        };
        let _ = writeln!(out, "{}", serde_json::to_string(&line).expect("plain strings serialize"));
    }
    out
}

pub fn save_corpus(corpus: &Corpus, items_path: &Path, interactions_path: &Path) -> Result<()> {
    std::fs::write(items_path, write_items(&corpus.items)).map_err(|e| Error::io(items_path, e))?;
    std::fs::write(interactions_path, write_interactions(&corpus.logs)).map_err(|e| Error::io(interactions_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const ITEMS: &str = r#"{"item_id":"a","category":"Strings","title":"Nylon Set","description":"soft"}
{"item_id":"b","title":"Capo","category":""}

{"item_id":"c","title":"Pick","description":null}
"#;

    fn write_pair(items: &str, inter: &str) -> (tempfile::TempDir, std::path::PathBuf, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("items.jsonl");
        let xp = dir.path().join("interactions.jsonl");
        std::fs::write(&ip, items).unwrap();
        std::fs::write(&xp, inter).unwrap();
        (dir, ip, xp)
    }

    #[test]
    fn empty_interactions_file_gives_no_logs() {
        let (_d, ip, xp) = write_pair(ITEMS, "");
        let c = load_corpus(&ip, &xp).unwrap();
        assert_eq!(c.items.len(), 3);
        assert!(c.logs.is_empty());
        assert_eq!(c.items[1].category, None);
        assert_eq!(c.items[2].description, None);
    }

    #[test]
    fn single_user_round_trip() {
        let (_d, ip, xp) = write_pair(ITEMS, "{\"user_id\":\"u1\",\"item_ids\":[\"a\",\"b\",\"c\"]}\n");
        let c = load_corpus(&ip, &xp).unwrap();
        assert_eq!(c.logs.len(), 1);
        assert_eq!(c.logs[0].item_ids, ["a", "b", "c"]);
        let again = parse_items(&write_items(&c.items), "mem").unwrap();
        assert_eq!(again, c.items);
        assert_eq!(parse_interactions(&write_interactions(&c.logs), "mem").unwrap(), c.logs);
    }

    #[test]
    fn unknown_item_is_named() {
        let (_d, ip, xp) = write_pair(ITEMS, "{\"user_id\":\"u1\",\"item_ids\":[\"a\",\"zz\"]}\n");
        let err = load_corpus(&ip, &xp).unwrap_err();
        assert!(err.to_string().contains("\"zz\""), "{err}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let (_d, ip, xp) = write_pair(ITEMS, "{\"user_id\":\"u1\",\"item_ids\":[\"a\"]}\n{not json\n");
        match load_corpus(&ip, &xp).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn duplicates_within_sequence_are_kept() {
        let logs = parse_interactions("{\"user_id\":\"u\",\"item_ids\":[\"a\",\"a\",\"b\"]}", "mem").unwrap();
        assert_eq!(logs[0].item_ids, ["a", "a", "b"]);
    }

    #[test]
    fn duplicate_item_ids_are_rejected() {
        let text = "{\"item_id\":\"a\",\"title\":\"x\"}\n{\"item_id\":\"a\",\"title\":\"y\"}\n";
        assert!(matches!(parse_items(text, "mem"), Err(Error::DuplicateItem(_))));
    }
}
