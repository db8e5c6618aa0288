use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedItem {
    pub item_id: String,
    pub tokens: Vec<usize>,
}

/// Item → token tuple and token tuple → items.
///
/// File form: one line per item, `item_id t1 … tK`, whitespace separated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenIndex {
    items: Vec<TokenizedItem>,
    forward: HashMap<String, usize>,
    reverse: BTreeMap<Vec<usize>, Vec<String>>,
    vocab: Vec<usize>,
}

impl TokenIndex {
    /// Builds the index, checking that every tuple has one token per level
    /// within that level's vocabulary and that ids are unique.
    pub fn new(entries: Vec<(String, Vec<usize>)>, vocab: &[usize]) -> Result<Self> {
        let mut items = Vec::with_capacity(entries.len());
        let mut forward = HashMap::with_capacity(entries.len());
        let mut reverse: BTreeMap<Vec<usize>, Vec<String>> = BTreeMap::new();
        for (item_id, tokens) in entries {
            if tokens.len() != vocab.len() {
                return Err(Error::shape(format!("token tuple of {item_id}"), vocab.len(), tokens.len()));
            }
            for (k, (&t, &v)) in tokens.iter().zip(vocab).enumerate() {
                if t >= v {
                    return Err(Error::TokenRange {
                        level: k + 1,
                        token: t,
                        vocab: v,
                    });
                }
            }
            if forward.insert(item_id.clone(), items.len()).is_some() {
                return Err(Error::DuplicateItem(item_id));
            }
            reverse.entry(tokens.clone()).or_default().push(item_id.clone());
            items.push(TokenizedItem { item_id, tokens });
        }
        Ok(Self {
            items,
            forward,
            reverse,
            vocab: vocab.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn depth(&self) -> usize {
        self.vocab.len()
    }

    /// `V_k` per level.
    pub fn vocab(&self) -> &[usize] {
        &self.vocab
    }

    pub fn items(&self) -> &[TokenizedItem] {
        &self.items
    }

    pub fn get(&self, item_id: &str) -> Option<&[usize]> {
        self.forward.get(item_id).map(|&i| self.items[i].tokens.as_slice())
    }

    /// Token tuple of an item, or an error naming it.
    pub fn tokens_of(&self, item_id: &str) -> Result<&[usize]> {
        self.get(item_id).ok_or_else(|| Error::Untokenized(item_id.to_string()))
    }

    /// Items carrying exactly this tuple, in insertion order.
    pub fn items_for(&self, tokens: &[usize]) -> &[String] {
        self.reverse.get(tokens).map_or(&[], Vec::as_slice)
    }

    pub fn tuples(&self) -> impl Iterator<Item = (&Vec<usize>, &Vec<String>)> {
        self.reverse.iter()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for it in &self.items {
            out.push_str(&it.item_id);
            for t in &it.tokens {
                write!(out, " {t}").expect("writing to a String");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, vocab: &[usize], file: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(id) = parts.next() else { continue };
            let tokens = parts
                .map(|p| p.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    file: file.to_string(),
                    line: n + 1,
                    message: format!("bad token: {e}"),
                })?;
            entries.push((id.to_string(), tokens));
        }
        Self::new(entries, vocab)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, vocab: &[usize]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, vocab, &path.display().to_string())
    }
}

/// Fraction of items whose full tuple is shared with at least one other item.
pub fn collision_rate(index: &TokenIndex) -> f64 {
    if index.is_empty() {
        return 0.0;
    }
    let colliding: usize = index.tuples().map(|(_, ids)| ids.len()).filter(|&n| n > 1).sum();
    colliding as f64 / index.len() as f64
}

/// Per level, distinct codes used divided by `V_k`.
pub fn utilization(index: &TokenIndex) -> Vec<f64> {
    (0..index.depth())
        .map(|k| {
            let used: HashSet<usize> = index.items().iter().map(|it| it.tokens[k]).collect();
            used.len() as f64 / index.vocab()[k] as f64
        })
        .collect()
}

/// For prefix lengths 1 and 2: the unweighted mean over prefix groups of the
/// largest share of one category inside the group.
pub fn prefix_purity(index: &TokenIndex, labels: &HashMap<String, String>) -> Result<[f64; 2]> {
    let mut out = [0.0; 2];
    for (slot, len) in [1usize, 2].into_iter().enumerate() {
        let mut groups: BTreeMap<&[usize], HashMap<&str, usize>> = BTreeMap::new();
        for it in index.items() {
            let label = labels.get(&it.item_id).ok_or_else(|| Error::InvalidItem {
                item: it.item_id.clone(),
                reason: "no category label".into(),
            })?;
            *groups
                .entry(&it.tokens[..len.min(it.tokens.len())])
                .or_default()
                .entry(label.as_str())
                .or_default() += 1;
        }
        let total: f64 = groups
            .values()
            .map(|g| {
                let n: usize = g.values().sum();
                *g.values().max().expect("non-empty group") as f64 / n as f64
            })
            .sum();
        out[slot] = if groups.is_empty() { 0.0 } else { total / groups.len() as f64 };
    }
    Ok(out)
}

/// `level,metric,value` rows: utilization per level, collision rate
/// (level `all`) and, when labels are given, prefix purity (level = prefix
/// length).
pub fn analytics_csv(index: &TokenIndex, labels: Option<&HashMap<String, String>>) -> Result<String> {
    let mut out = String::from("level,metric,value\n");
    for (k, u) in utilization(index).iter().enumerate() {
        writeln!(out, "{},utilization,{u}", k + 1).expect("writing to a String");
    }
    writeln!(out, "all,collision_rate,{}", collision_rate(index)).expect("writing to a String");
    if let Some(labels) = labels {
        let p = prefix_purity(index, labels)?;
        writeln!(out, "1,prefix_purity,{}", p[0]).expect("writing to a String");
        writeln!(out, "2,prefix_purity,{}", p[1]).expect("writing to a String");
    }
    Ok(out)
}
