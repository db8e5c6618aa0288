use std::collections::{BTreeMap, HashMap};

use super::{EmbeddingTable, FeaturizerConfig};
use crate::corpus::InteractionLog;
use crate::error::{Error, Result};
use crate::numerics::eigen::top_eigen;
use crate::numerics::Tensor2;

/// Symmetric sparse matrix stored as sorted adjacency rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymmetric {
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseSymmetric {
    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .binary_search_by_key(&j, |&(c, _)| c)
            .map_or(0.0, |k| self.rows[i][k].1)
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn to_dense(&self) -> Tensor2 {
        let n = self.dim();
        let mut out = Tensor2::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                out.set(i, j, v);
            }
        }
        out
    }

    /// `self · x`
    pub fn matmul(&self, x: &Tensor2) -> Tensor2 {
        let mut out = Tensor2::zeros(self.dim(), x.cols());
        for (i, row) in self.rows.iter().enumerate() {
            let o = out.row_mut(i);
            for &(j, v) in row {
                for (a, b) in o.iter_mut().zip(x.row(j)) {
                    *a += v * b;
                }
            }
        }
        out
    }
}

/// Positive pointwise mutual information of symmetric windowed
/// co-occurrence counts. Row/column order follows `ids`; interactions with
/// items outside `ids` are ignored, as are pairs of an item with itself.
pub fn cooccurrence_ppmi(train: &[InteractionLog], ids: &[String], window: usize) -> SparseSymmetric {
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut counts: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for log in train {
        let seq: Vec<Option<usize>> = log.item_ids.iter().map(|i| index.get(i.as_str()).copied()).collect();
        for (p, a) in seq.iter().enumerate() {
            let Some(a) = *a else { continue };
            for b in seq.iter().skip(p + 1).take(window) {
                let Some(b) = *b else { continue };
                if a != b {
                    *counts.entry((a, b)).or_default() += 1.0;
                    *counts.entry((b, a)).or_default() += 1.0;
                }
            }
        }
    }
    let mut marginal = vec![0.0; ids.len()];
    let mut total = 0.0;
    for (&(a, _), &c) in &counts {
        marginal[a] += c;
        total += c;
    }
    let mut rows = vec![Vec::new(); ids.len()];
    for (&(a, b), &c) in &counts {
        let pmi = (c * total / (marginal[a] * marginal[b])).ln();
        if pmi > 0.0 {
            rows[a].push((b, pmi));
        }
    }
    SparseSymmetric { rows }
}

/// Collaborative item embeddings from the training sequences: PPMI of
/// windowed co-occurrence, factorised by orthogonal iteration. Each row is
/// `u_j · sqrt(λ_j)` over the leading positive eigenpairs, so dot products
/// approximate the positive part of the PPMI matrix. Items that never
/// co-occur with anything get a zero vector.
pub fn train_cf_embeddings(train: &[InteractionLog], ids: &[String], config: &FeaturizerConfig) -> Result<EmbeddingTable> {
    config.validate()?;
    if train.iter().all(|l| l.item_ids.is_empty()) {
        return Err(Error::Config("collaborative embeddings need a non-empty training split".into()));
    }
    let ppmi = cooccurrence_ppmi(train, ids, config.cooccurrence_window);
    let n = ids.len();
    let d = config.d_cf;
    let mut table = Tensor2::zeros(n, d);
    let isolated: Vec<&String> = ids.iter().enumerate().filter(|(i, _)| ppmi.row(*i).is_empty()).map(|(_, id)| id).collect();
    if !isolated.is_empty() {
        log::warn!(
            "{} item(s) never co-occur with another item; their collaborative embedding is zero (first: {})",
            isolated.len(),
            isolated[0]
        );
    }
    if ppmi.nnz() > 0 {
        let rank = (2 * d).min(n);
        let (vals, vecs) = top_eigen(n, rank, config.svd_iterations, config.projection_seed, |x| ppmi.matmul(x));
        let mut positive: Vec<usize> = (0..vals.len()).filter(|&j| vals[j] > 0.0).collect();
        positive.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
        for (dst, &src) in positive.iter().take(d).enumerate() {
            let s = vals[src].sqrt();
            for i in 0..n {
                if !ppmi.row(i).is_empty() {
                    table.set(i, dst, vecs.get(i, src) * s);
                }
            }
        }
    }
    if !table.is_finite() {
        return Err(Error::NonFinite("collaborative embeddings".into()));
    }
    EmbeddingTable::new(ids.to_vec(), table)
}
