//! Reformulation retrieval, precision/recall at K, and the brute-force
//! best-possible scores used for normalisation.

use std::collections::HashSet;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::baseline::{bray_curtis, by_distance_then_id, hash_query_with, HashedQuery};
use crate::embedder::AttentionModel;
use crate::error::{Error, Result};
use crate::linalg::{dot_unchecked, Matrix};
use crate::types::Query;

pub const DEFAULT_K: usize = 20;
pub const DEFAULT_REFORMULATIONS: usize = 5;
pub const DEFAULT_ORACLE_CANDIDATES: usize = 25;

/// A searchable store of training queries.
pub trait RetrievalIndex: Sync {
    /// Query ids held by the store.
    fn ids(&self) -> &[usize];
    /// `(distance, id)` for every stored query; smaller is closer.
    fn distances(&self, probe: &Query) -> Result<Vec<(f64, usize)>>;
}

/// Dot-product similarity over learned query vectors.
pub struct EmbeddingIndex<'a> {
    model: &'a AttentionModel,
    ids: Vec<usize>,
    vectors: Matrix,
}

impl<'a> EmbeddingIndex<'a> {
    pub fn new(model: &'a AttentionModel, store: &[Query], ids: Vec<usize>) -> Result<Self> {
        let mut vectors = Matrix::zeros(ids.len(), model.dim());
        for (row, &id) in ids.iter().enumerate() {
            let q = store.get(id).ok_or(Error::UnknownQuery(id))?;
            vectors.row_mut(row).copy_from_slice(&model.embed_query(q)?);
        }
        Ok(EmbeddingIndex { model, ids, vectors })
    }
}

impl RetrievalIndex for EmbeddingIndex<'_> {
    fn ids(&self) -> &[usize] {
        &self.ids
    }

    fn distances(&self, probe: &Query) -> Result<Vec<(f64, usize)>> {
        let z = self.model.embed_query(probe)?;
        Ok(self
            .vectors
            .iter_rows()
            .zip(&self.ids)
            .map(|(v, &id)| (-dot_unchecked(&z, v), id))
            .collect())
    }
}

/// Bray-Curtis distance over hashed trigram bags.
pub struct HashIndex {
    dim: usize,
    ids: Vec<usize>,
    entries: Vec<HashedQuery>,
}

impl HashIndex {
    pub fn new(store: &[Query], ids: Vec<usize>, dim: usize) -> Result<Self> {
        let entries = ids
            .iter()
            .map(|&id| {
                store
                    .get(id)
                    .map(|q| hash_query_with(id, q, dim))
                    .ok_or(Error::UnknownQuery(id))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(HashIndex { dim, ids, entries })
    }
}

impl RetrievalIndex for HashIndex {
    fn ids(&self) -> &[usize] {
        &self.ids
    }

    fn distances(&self, probe: &Query) -> Result<Vec<(f64, usize)>> {
        let p = hash_query_with(usize::MAX, probe, self.dim);
        self.entries
            .iter()
            .map(|h| Ok((bray_curtis(&h.buckets, &p.buckets)?, h.id)))
            .collect()
    }
}

/// The `count` stored queries closest to `probe`, skipping `probe_id`.
pub fn reformulate(
    index: &dyn RetrievalIndex,
    probe_id: usize,
    probe: &Query,
    count: usize,
) -> Result<Vec<usize>> {
    let mut scored: Vec<(f64, usize)> = index
        .distances(probe)?
        .into_iter()
        .filter(|&(_, id)| id != probe_id)
        .collect();
    if scored.len() < count {
        return Err(Error::StoreTooSmall {
            available: scored.len(),
            requested: count,
        });
    }
    scored.sort_by(by_distance_then_id);
    Ok(scored.into_iter().take(count).map(|(_, id)| id).collect())
}

/// Products sorted by purchase count descending, ties by id; at most `k`.
pub fn top_k_products(purchases: &[(usize, u32)], k: usize) -> Vec<usize> {
    let mut sorted = purchases.to_vec();
    sorted.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    sorted.into_iter().take(k).map(|(p, _)| p).collect()
}

fn top_set(purchases: &[Vec<(usize, u32)>], q: usize, k: usize) -> Result<HashSet<usize>> {
    let list = purchases.get(q).ok_or(Error::UnknownQuery(q))?;
    Ok(top_k_products(list, k).into_iter().collect())
}

/// Fraction of reformulations whose top-K products meet q's top-K.
pub fn query_precision_at_k(
    q: usize,
    reformulations: &[usize],
    purchases: &[Vec<(usize, u32)>],
    k: usize,
) -> Result<f64> {
    if reformulations.is_empty() {
        return Ok(0.0);
    }
    let target = top_set(purchases, q, k)?;
    let mut relevant = 0usize;
    for &r in reformulations {
        if !top_set(purchases, r, k)?.is_disjoint(&target) {
            relevant += 1;
        }
    }
    Ok(relevant as f64 / reformulations.len() as f64)
}

/// Fraction of q's top-K products found among the reformulations' top-K.
pub fn product_recall_at_k(
    q: usize,
    reformulations: &[usize],
    purchases: &[Vec<(usize, u32)>],
    k: usize,
) -> Result<f64> {
    let target = top_set(purchases, q, k)?;
    if target.is_empty() {
        return Ok(0.0);
    }
    let mut union = HashSet::new();
    for &r in reformulations {
        union.extend(top_set(purchases, r, k)?);
    }
    Ok(target.intersection(&union).count() as f64 / target.len() as f64)
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Best precision and best recall reachable by any `count`-subset of the
/// `candidates` pool entries with the largest top-K overlap with `q`
/// (ties by id). The two maxima are taken independently.
pub fn oracle_best(
    q: usize,
    pool: &[usize],
    purchases: &[Vec<(usize, u32)>],
    k: usize,
    count: usize,
    candidates: usize,
) -> Result<(f64, f64)> {
    if candidates > 32 {
        return Err(Error::InvalidConfig(format!(
            "oracle candidate pool {candidates} exceeds 32"
        )));
    }
    let target = top_k_products(purchases.get(q).ok_or(Error::UnknownQuery(q))?, k);
    if target.len() > 64 {
        return Err(Error::InvalidConfig("K above 64 is not supported by the oracle".into()));
    }
    // (overlap, id, relevant, coverage bits over target)
    let mut scored = Vec::new();
    for &c in pool.iter().filter(|&&c| c != q) {
        let tops = top_set(purchases, c, k)?;
        let mut cover = 0u64;
        for (bit, p) in target.iter().enumerate() {
            if tops.contains(p) {
                cover |= 1 << bit;
            }
        }
        scored.push((cover.count_ones(), c, cover));
    }
    scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.truncate(candidates);
    let size = count.min(scored.len());
    if size == 0 || target.is_empty() {
        return Ok((0.0, 0.0));
    }
    let n = scored.len() as u32;
    let mut best_hits = 0u32;
    let mut best_cover = 0u32;
    // Gosper's hack over all `size`-bit masks below 2^n
    let mut mask: u64 = (1u64 << size) - 1;
    while mask < (1u64 << n) {
        let (mut hits, mut cover) = (0u32, 0u64);
        let mut bits = mask;
        while bits != 0 {
            let i = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            let c = scored[i].2;
            hits += (c != 0) as u32;
            cover |= c;
        }
        best_hits = best_hits.max(hits);
        best_cover = best_cover.max(cover.count_ones());
        let low = mask & mask.wrapping_neg();
        let ripple = mask + low;
        mask = (((ripple ^ mask) >> 2) / low) | ripple;
    }
    Ok((
        best_hits as f64 / size as f64,
        best_cover as f64 / target.len() as f64,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub k: usize,
    pub count: usize,
    pub oracle_candidates: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k: DEFAULT_K,
            count: DEFAULT_REFORMULATIONS,
            oracle_candidates: DEFAULT_ORACLE_CANDIDATES,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryRow {
    pub query: usize,
    pub reformulations: Vec<usize>,
    pub precision: f64,
    pub recall: f64,
    pub best_precision: f64,
    pub best_recall: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub model: String,
    pub k: usize,
    pub rows: Vec<QueryRow>,
    pub mean_precision: f64,
    pub mean_recall: f64,
    /// `f1(mean_precision, mean_recall)`.
    pub f1: f64,
    /// Mean of per-query F1 values.
    pub mean_query_f1: f64,
    pub best_precision: f64,
    pub best_recall: f64,
    pub normalized_precision: f64,
    pub normalized_recall: f64,
    pub normalized_f1: f64,
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

/// Scores every test query against `index`, in parallel over queries.
/// The oracle draws from the index's own ids.
pub fn evaluate(
    model_name: &str,
    index: &dyn RetrievalIndex,
    store: &[Query],
    test_ids: &[usize],
    purchases: &[Vec<(usize, u32)>],
    config: &EvalConfig,
) -> Result<EvalReport> {
    if test_ids.is_empty() {
        return Err(Error::EmptySamples("test queries"));
    }
    let rows = test_ids
        .par_iter()
        .map(|&q| {
            let probe = store.get(q).ok_or(Error::UnknownQuery(q))?;
            let reformulations = reformulate(index, q, probe, config.count)?;
            let (best_precision, best_recall) = oracle_best(
                q,
                index.ids(),
                purchases,
                config.k,
                config.count,
                config.oracle_candidates,
            )?;
            Ok(QueryRow {
                query: q,
                precision: query_precision_at_k(q, &reformulations, purchases, config.k)?,
                recall: product_recall_at_k(q, &reformulations, purchases, config.k)?,
                reformulations,
                best_precision,
                best_recall,
            })
        })
        .collect::<Result<Vec<QueryRow>>>()?;
    let n = rows.len() as f64;
    let avg = |f: &dyn Fn(&QueryRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let mean_precision = avg(&|r| r.precision);
    let mean_recall = avg(&|r| r.recall);
    let best_precision = avg(&|r| r.best_precision);
    let best_recall = avg(&|r| r.best_recall);
    let f = f1(mean_precision, mean_recall);
    Ok(EvalReport {
        model: model_name.to_string(),
        k: config.k,
        mean_query_f1: avg(&|r| f1(r.precision, r.recall)),
        mean_precision,
        mean_recall,
        f1: f,
        best_precision,
        best_recall,
        normalized_precision: ratio(mean_precision, best_precision),
        normalized_recall: ratio(mean_recall, best_recall),
        normalized_f1: ratio(f, f1(best_precision, best_recall)),
        rows,
    })
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("query,reformulations,precision,recall,best_precision,best_recall\n");
        for r in &self.rows {
            let refs: Vec<String> = r.reformulations.iter().map(|x| x.to_string()).collect();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.query,
                refs.join(" "),
                r.precision,
                r.recall,
                r.best_precision,
                r.best_recall
            );
        }
        out
    }
}

/// Summary in the layout of a results table: one row per model, scores as
/// percentages of the brute-force best, raw means in trailing columns.
pub fn summary_table(reports: &[&EvalReport]) -> String {
    let k = reports.first().map_or(DEFAULT_K, |r| r.k);
    let mut out = format!(
        "{:<12} {:>14} {:>14} {:>8}   {:>8} {:>8} {:>8} {:>9}\n",
        "model",
        format!("precision@{k}"),
        format!("recall@{k}"),
        "f1",
        "raw_p",
        "raw_r",
        "raw_f1",
        "query_f1"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<12} {:>13.1}% {:>13.1}% {:>7.1}%   {:>8.4} {:>8.4} {:>8.4} {:>9.4}",
            r.model,
            100.0 * r.normalized_precision,
            100.0 * r.normalized_recall,
            100.0 * r.normalized_f1,
            r.mean_precision,
            r.mean_recall,
            r.f1,
            r.mean_query_f1
        );
    }
    out
}
