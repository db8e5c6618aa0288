use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{Corpus, InteractionLog};
use crate::error::{Error, Result};

pub const MIN_INTERACTIONS: usize = 5;
/// Histories keep at most this many most recent items.
pub const MAX_HISTORY: usize = 20;

/// A held-out next-item prediction: `history` (oldest first) then `target`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeldOut {
    pub user_id: String,
    pub history: Vec<String>,
    pub target: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<InteractionLog>,
    pub valid: Vec<HeldOut>,
    pub test: Vec<HeldOut>,
}

/// Repeatedly drops users and items with fewer than `min` interactions
/// until nothing changes. Items keep their input order.
pub fn filter_min_interactions(corpus: &Corpus, min: usize) -> Corpus {
    let mut logs = corpus.logs.clone();
    loop {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for l in &logs {
            for i in &l.item_ids {
                *counts.entry(i.as_str()).or_default() += 1;
            }
        }
        let keep: HashSet<String> = counts
            .into_iter()
            .filter(|&(_, c)| c >= min)
            .map(|(i, _)| i.to_string())
            .collect();
        let next: Vec<InteractionLog> = logs
            .iter()
            .map(|l| InteractionLog {
                user_id: l.user_id.clone(),
                item_ids: l.item_ids.iter().filter(|i| keep.contains(*i)).cloned().collect(),
            })
            .filter(|l| l.item_ids.len() >= min)
            .collect();
        if next == logs {
            break;
        }
        logs = next;
    }
    let used: HashSet<&str> = logs.iter().flat_map(|l| l.item_ids.iter().map(String::as_str)).collect();
    let items = corpus
        .items
        .iter()
        .filter(|i| used.contains(i.item_id.as_str()))
        .cloned()
        .collect();
    Corpus { items, logs }
}

fn recent(seq: &[String]) -> Vec<String> {
    seq[seq.len().saturating_sub(MAX_HISTORY)..].to_vec()
}

/// Last interaction → test, second to last → validation, the rest → train.
/// Input order is taken as chronological.
pub fn split_leave_one_out(corpus: &Corpus) -> Result<DatasetSplit> {
    let mut split = DatasetSplit::default();
    for log in &corpus.logs {
        let n = log.item_ids.len();
        if n < 3 {
            return Err(Error::SequenceTooShort {
                user: log.user_id.clone(),
                len: n,
                min: 3,
            });
        }
        let seq = &log.item_ids;
        split.train.push(InteractionLog {
            user_id: log.user_id.clone(),
            item_ids: seq[..n - 2].to_vec(),
        });
        split.valid.push(HeldOut {
            user_id: log.user_id.clone(),
            history: recent(&seq[..n - 2]),
            target: seq[n - 2].clone(),
        });
        split.test.push(HeldOut {
            user_id: log.user_id.clone(),
            history: recent(&seq[..n - 1]),
            target: seq[n - 1].clone(),
        });
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ItemRecord;
    use proptest::prelude::*;

    fn log(user: &str, items: &[&str]) -> InteractionLog {
        InteractionLog {
            user_id: user.into(),
            item_ids: items.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn items(ids: &[&str]) -> Vec<ItemRecord> {
        ids.iter()
            .map(|i| ItemRecord {
                item_id: i.to_string(),
                category: None,
                title: i.to_string(),
                description: None,
            })
            .collect()
    }

    #[test]
    fn dense_corpus_is_a_fixed_point() {
        let ids = ["a", "b", "c", "d", "e"];
        let logs: Vec<_> = (0..5).map(|u| log(&format!("u{u}"), &ids)).collect();
        let c = Corpus::new(items(&ids), logs);
        assert_eq!(filter_min_interactions(&c, 5), c);
    }

    #[test]
    fn short_single_user_corpus_vanishes() {
        let c = Corpus::new(items(&["a", "b", "c"]), vec![log("u", &["a", "b", "c"])]);
        let f = filter_min_interactions(&c, 5);
        assert!(f.logs.is_empty());
        assert!(f.items.is_empty());
    }

    #[test]
    fn removal_cascades_to_fixed_point() {
        // Hand simulation (threshold 5):
        // counts a..d = 6, e = 5, y = 4, x = 1.
        // round 1: x and y drop; u0 shrinks to [a b c d] (4) and drops;
        //          u1..u3 keep [a b c d e].
        // round 2: a..e now have exactly 5 interactions each; nothing changes.
        let c = Corpus::new(
            items(&["a", "b", "c", "d", "e", "x", "y"]),
            vec![
                log("u0", &["a", "b", "c", "d", "x", "y"]),
                log("u1", &["a", "b", "c", "d", "e", "y"]),
                log("u2", &["a", "b", "y", "c", "d", "e"]),
                log("u3", &["y", "a", "b", "c", "d", "e"]),
                log("u4", &["a", "b", "c", "d", "e"]),
                log("u5", &["e", "d", "c", "b", "a"]),
            ],
        );
        let f = filter_min_interactions(&c, 5);
        let users: Vec<&str> = f.logs.iter().map(|l| l.user_id.as_str()).collect();
        assert_eq!(users, ["u1", "u2", "u3", "u4", "u5"]);
        assert_eq!(f.logs[1].item_ids, ["a", "b", "c", "d", "e"]);
        assert_eq!(f.logs[4].item_ids, ["e", "d", "c", "b", "a"]);
        let kept: Vec<&str> = f.items.iter().map(|i| i.item_id.as_str()).collect();
        assert_eq!(kept, ["a", "b", "c", "d", "e"]);
    }

    #[test]
    fn minimal_split() {
        let c = Corpus::new(items(&["a", "b", "c"]), vec![log("u", &["a", "b", "c"])]);
        let s = split_leave_one_out(&c).unwrap();
        assert_eq!(s.train[0].item_ids, ["a"]);
        assert_eq!(s.valid[0].history, ["a"]);
        assert_eq!(s.valid[0].target, "b");
        assert_eq!(s.test[0].history, ["a", "b"]);
        assert_eq!(s.test[0].target, "c");
    }

    #[test]
    fn long_history_is_truncated() {
        let ids: Vec<String> = (0..25).map(|i| format!("i{i}")).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let s = split_leave_one_out(&Corpus::new(vec![], vec![log("u", &refs)])).unwrap();
        assert_eq!(s.test[0].history.len(), 20);
        assert_eq!(s.test[0].history[0], "i4");
        assert_eq!(s.test[0].history[19], "i23");
        assert_eq!(s.train[0].item_ids.len(), 23);
    }

    #[test]
    fn two_users_two_pairs_each() {
        let c = Corpus::new(vec![], vec![log("u", &["a", "b", "c"]), log("v", &["c", "b", "a", "d"])]);
        let s = split_leave_one_out(&c).unwrap();
        assert_eq!((s.valid.len(), s.test.len()), (2, 2));
    }

    #[test]
    fn too_short_sequence_names_user() {
        let c = Corpus::new(vec![], vec![log("shorty", &["a", "b"])]);
        let err = split_leave_one_out(&c).unwrap_err();
        assert!(err.to_string().contains("shorty"));
    }

    proptest! {
        #[test]
        fn filter_is_idempotent(seqs in proptest::collection::vec(proptest::collection::vec(0u8..8, 0..12), 0..15)) {
            let logs: Vec<_> = seqs.iter().enumerate().map(|(u, s)| InteractionLog {
                user_id: format!("u{u}"),
                item_ids: s.iter().map(|i| format!("i{i}")).collect(),
            }).collect();
            let ids: Vec<String> = (0..8).map(|i| format!("i{i}")).collect();
            let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
            let c = Corpus::new(items(&refs), logs);
            let once = filter_min_interactions(&c, 3);
            prop_assert_eq!(filter_min_interactions(&once, 3), once);
        }

        #[test]
        fn split_reassembles_sequences(seqs in proptest::collection::vec(proptest::collection::vec(0u8..30, 3..40), 1..10)) {
            let logs: Vec<_> = seqs.iter().enumerate().map(|(u, s)| InteractionLog {
                user_id: format!("u{u}"),
                item_ids: s.iter().map(|i| format!("i{i}")).collect(),
            }).collect();
            let split = split_leave_one_out(&Corpus::new(vec![], logs.clone())).unwrap();
            for (u, l) in logs.iter().enumerate() {
                let mut joined = split.train[u].item_ids.clone();
                joined.push(split.valid[u].target.clone());
                joined.push(split.test[u].target.clone());
                prop_assert_eq!(&joined, &l.item_ids);
                prop_assert!(split.test[u].history.len() <= MAX_HISTORY);
                prop_assert_eq!(split.test[u].history.last(), Some(&split.valid[u].target));
            }
        }
    }
}
