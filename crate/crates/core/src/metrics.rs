//! DCG and NDCG@k with gains `2^y − 1` and discounts `log₂(1 + rank)`.
//!
//! Ties in scores are broken by ascending doc id, so a ranking is a
//! deterministic function of `(scores, doc_ids)`. Queries whose labels are all
//! zero have no ideal gain and score 0.

use std::cmp::Ordering;
use std::io::Write;

use crate::data::{Dataset, QueryList};
use crate::model::{ModelError, ScoringModel};

/// `positions[i]` is the 1-based rank of document `i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ranking {
    positions: Vec<usize>,
}

impl Ranking {
    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    /// Document indices in rank order.
    pub fn order(&self) -> Vec<usize> {
        let mut order = vec![0; self.positions.len()];
        for (doc, &pos) in self.positions.iter().enumerate() {
            order[pos - 1] = doc;
        }
        order
    }

    fn from_order(order: &[usize]) -> Self {
        let mut positions = vec![0; order.len()];
        for (rank, &doc) in order.iter().enumerate() {
            positions[doc] = rank + 1;
        }
        Self { positions }
    }
}

fn sort_desc(keys: &[f64], doc_ids: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| match keys[b].partial_cmp(&keys[a]) {
        Some(Ordering::Equal) | None => doc_ids[a].cmp(&doc_ids[b]),
        Some(o) => o,
    });
    order
}

/// Descending score order, ties by ascending doc id.
pub fn rank_by_scores(s: &[f64], doc_ids: &[usize]) -> Ranking {
    assert_eq!(s.len(), doc_ids.len());
    Ranking::from_order(&sort_desc(s, doc_ids))
}

pub fn gain(label: f64) -> f64 {
    label.exp2() - 1.0
}

pub fn discount(rank: usize) -> f64 {
    ((1 + rank) as f64).log2()
}

/// DCG truncated at rank `k`.
pub fn dcg(ranking: &Ranking, y: &[f64], k: usize) -> f64 {
    assert!(k >= 1, "cutoff must be >= 1");
    // Summed in rank order so the result does not depend on input order.
    ranking
        .order()
        .iter()
        .take(k)
        .enumerate()
        .map(|(r, &doc)| gain(y[doc]) / discount(r + 1))
        .sum()
}

/// Ideal ranking: labels descending, ties by doc id.
pub fn ideal_ranking(y: &[f64], doc_ids: &[usize]) -> Ranking {
    Ranking::from_order(&sort_desc(y, doc_ids))
}

/// NDCG@k where document `i` has doc id `i`.
pub fn ndcg_at_k(s: &[f64], y: &[f64], k: usize) -> f64 {
    let ids: Vec<usize> = (0..s.len()).collect();
    ndcg_at_k_with_ids(s, y, &ids, k)
}

pub fn ndcg_at_k_with_ids(s: &[f64], y: &[f64], doc_ids: &[usize], k: usize) -> f64 {
    assert_eq!(s.len(), y.len());
    let ideal = dcg(&ideal_ranking(y, doc_ids), y, k);
    if ideal <= 0.0 {
        return 0.0;
    }
    dcg(&rank_by_scores(s, doc_ids), y, k) / ideal
}

/// Per-query NDCG at several cutoffs with dataset means.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub ks: Vec<usize>,
    /// `(qid, ndcg at each k)`.
    pub per_query: Vec<(String, Vec<f64>)>,
    pub means: Vec<f64>,
}

impl MetricReport {
    pub fn query_count(&self) -> usize {
        self.per_query.len()
    }

    /// Mean NDCG at cutoff `k`, if it was computed.
    pub fn mean_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&c| c == k).map(|i| self.means[i])
    }

    pub fn from_per_query(ks: &[usize], per_query: Vec<(String, Vec<f64>)>) -> Self {
        let count = per_query.len().max(1) as f64;
        let means = (0..ks.len())
            .map(|j| per_query.iter().map(|(_, v)| v[j]).sum::<f64>() / count)
            .collect();
        Self {
            ks: ks.to_vec(),
            per_query,
            means,
        }
    }

    /// `qid\tndcg@1\t...` header, one row per query, then a `MEAN` row.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "qid")?;
        for k in &self.ks {
            write!(out, "\tndcg@{k}")?;
        }
        writeln!(out)?;
        for (qid, vals) in &self.per_query {
            write!(out, "{qid}")?;
            for v in vals {
                write!(out, "\t{v:.6}")?;
            }
            writeln!(out)?;
        }
        write!(out, "MEAN")?;
        for v in &self.means {
            write!(out, "\t{v:.6}")?;
        }
        writeln!(out)
    }
}

pub fn evaluate_query(scores: &[f64], ql: &QueryList, ks: &[usize]) -> Vec<f64> {
    ks.iter()
        .map(|&k| ndcg_at_k_with_ids(scores, &ql.labels, &ql.doc_ids, k))
        .collect()
}

/// Evaluates precomputed per-query scores (aligned with `ds` order).
pub fn evaluate_scores(ds: &Dataset, scores: &[Vec<f64>], ks: &[usize]) -> MetricReport {
    assert_eq!(ds.len(), scores.len());
    let per_query = ds
        .queries()
        .iter()
        .zip(scores)
        .map(|(q, s)| (q.qid.clone(), evaluate_query(s, q, ks)))
        .collect();
    MetricReport::from_per_query(ks, per_query)
}

/// Inference-mode NDCG of `model` over every query of `ds`.
pub fn evaluate_dataset(model: &ScoringModel, ds: &Dataset, ks: &[usize]) -> Result<MetricReport, ModelError> {
    let scores = ds
        .queries()
        .iter()
        .map(|q| model.score(q))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(evaluate_scores(ds, &scores, ks))
}

pub const DEFAULT_KS: [usize; 3] = [1, 5, 10];
