//! Query-grouped ranking data.
//!
//! A [`Dataset`] is an ordered list of [`QueryList`]s sharing one dense
//! feature dimension. Labels are stored as `f64` because distillation labels
//! (transformed teacher scores) flow through the same type as graded grades.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng::{self, Rng};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("MalformedLine({line}): {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("NegativeLabel({line})")]
    NegativeLabel { line: usize },
    #[error("EmptyDataset: no valid rows")]
    EmptyDataset,
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error("InvalidFractions: {0}")]
    InvalidFractions(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// One query with its documents. Row `i` of `features` belongs to
/// `labels[i]` and `doc_ids[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryList {
    pub qid: String,
    feature_count: usize,
    features: Vec<f64>,
    pub labels: Vec<f64>,
    pub doc_ids: Vec<usize>,
}

impl QueryList {
    /// Builds a query list from row-major features. Panics if the shapes of
    /// `features`, `labels` and `doc_ids` disagree; these are programmer errors.
    pub fn new(
        qid: impl Into<String>,
        feature_count: usize,
        features: Vec<f64>,
        labels: Vec<f64>,
        doc_ids: Vec<usize>,
    ) -> Self {
        let n = labels.len();
        assert!(n >= 1, "a query list needs at least one document");
        assert_eq!(features.len(), n * feature_count, "feature matrix shape");
        assert_eq!(doc_ids.len(), n, "doc_ids length");
        Self {
            qid: qid.into(),
            feature_count,
            features,
            labels,
            doc_ids,
        }
    }

    /// Query list whose doc ids follow row order.
    pub fn from_rows(qid: impl Into<String>, rows: &[Vec<f64>], labels: Vec<f64>) -> Self {
        let k = rows.first().map_or(0, Vec::len);
        let features = rows.iter().flat_map(|r| r.iter().copied()).collect();
        let doc_ids = (0..labels.len()).collect();
        Self::new(qid, k, features, labels, doc_ids)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    /// Row-major `n × k` feature matrix.
    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_count..(i + 1) * self.feature_count]
    }

    /// Same documents and features with a different label vector.
    pub fn with_labels(&self, labels: Vec<f64>) -> Self {
        assert_eq!(labels.len(), self.len());
        Self {
            labels,
            ..self.clone()
        }
    }

    /// Reorders rows by `order` (a permutation of row indices).
    pub fn permuted(&self, order: &[usize]) -> Self {
        assert_eq!(order.len(), self.len());
        let k = self.feature_count;
        let mut features = Vec::with_capacity(self.features.len());
        for &i in order {
            features.extend_from_slice(self.row(i));
        }
        Self {
            qid: self.qid.clone(),
            feature_count: k,
            features,
            labels: order.iter().map(|&i| self.labels[i]).collect(),
            doc_ids: order.iter().map(|&i| self.doc_ids[i]).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    feature_count: usize,
    queries: Vec<QueryList>,
}

impl Dataset {
    /// Panics if a query disagrees on the feature count or a qid repeats.
    pub fn new(name: impl Into<String>, feature_count: usize, queries: Vec<QueryList>) -> Self {
        let mut seen = std::collections::HashSet::new();
        for q in &queries {
            assert_eq!(q.feature_count(), feature_count, "query {} feature count", q.qid);
            assert!(seen.insert(q.qid.clone()), "duplicate qid {}", q.qid);
        }
        Self {
            name: name.into(),
            feature_count,
            queries,
        }
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    pub fn queries(&self) -> &[QueryList] {
        &self.queries
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn doc_count(&self) -> usize {
        self.queries.iter().map(QueryList::len).sum()
    }

    pub fn into_queries(self) -> Vec<QueryList> {
        self.queries
    }
}

/// Reads SVMLight / LETOR text: `<label> qid:<id> <idx>:<val> ... [# comment]`.
///
/// Rows are grouped by qid in order of first appearance; indices are 1-based
/// and missing ones are filled with `0.0`.
pub fn parse_svmlight<R: BufRead>(reader: R, name: &str) -> Result<Dataset, DataError> {
    struct Row {
        label: f64,
        sparse: Vec<(usize, f64)>,
    }

    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<Row>> = HashMap::new();
    let mut max_index = 0usize;

    for (line_idx, line) in reader.lines().enumerate() {
        let line_no = line_idx + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let malformed = |reason: String| DataError::MalformedLine {
            line: line_no,
            reason,
        };
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label: f64 = label_tok
            .parse()
            .map_err(|_| malformed(format!("bad label {label_tok:?}")))?;
        if !label.is_finite() {
            return Err(malformed(format!("non-finite label {label_tok:?}")));
        }
        if label < 0.0 {
            return Err(DataError::NegativeLabel { line: line_no });
        }
        let qid = match tokens.next().and_then(|t| t.strip_prefix("qid:")) {
            Some(q) if !q.is_empty() => q.to_string(),
            _ => return Err(malformed("missing qid".into())),
        };
        let mut sparse = Vec::new();
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| malformed(format!("bad feature token {tok:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| malformed(format!("bad feature index {idx:?}")))?;
            if idx == 0 {
                return Err(malformed("feature indices are 1-based".into()));
            }
            let val: f64 = val
                .parse()
                .map_err(|_| malformed(format!("bad feature value {val:?}")))?;
            max_index = max_index.max(idx);
            sparse.push((idx, val));
        }
        if !groups.contains_key(&qid) {
            order.push(qid.clone());
        }
        groups.entry(qid).or_default().push(Row { label, sparse });
    }

    if order.is_empty() {
        return Err(DataError::EmptyDataset);
    }

    let k = max_index;
    let queries = order
        .into_iter()
        .map(|qid| {
            let rows = groups.remove(&qid).expect("grouped qid");
            let n = rows.len();
            let mut features = vec![0.0; n * k];
            let mut labels = Vec::with_capacity(n);
            for (i, row) in rows.into_iter().enumerate() {
                for (idx, val) in row.sparse {
                    features[i * k + idx - 1] = val;
                }
                labels.push(row.label);
            }
            QueryList::new(qid, k, features, labels, (0..n).collect())
        })
        .collect();
    Ok(Dataset::new(name, k, queries))
}

/// Writes every feature densely so re-parsing recovers the same feature count.
/// Rows are emitted in doc_id order.
pub fn write_svmlight<W: Write>(ds: &Dataset, mut out: W) -> std::io::Result<()> {
    for q in ds.queries() {
        let mut order: Vec<usize> = (0..q.len()).collect();
        order.sort_by_key(|&i| q.doc_ids[i]);
        for i in order {
            write!(out, "{} qid:{}", q.labels[i], q.qid)?;
            for (j, v) in q.row(i).iter().enumerate() {
                write!(out, " {}:{}", j + 1, v)?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

fn default_docs_per_query() -> (usize, usize) {
    (20, 20)
}

fn default_label_grades() -> u32 {
    4
}

/// Parameters for the synthetic stand-in dataset. Clean grades come from a
/// random linear function of uniform features plus a per-query offset,
/// discretized into `0..=label_grades` with equal-width bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub num_queries: usize,
    /// Inclusive `(min, max)` documents per query.
    #[serde(default = "default_docs_per_query")]
    pub docs_per_query: (usize, usize),
    pub feature_count: usize,
    #[serde(default)]
    pub latent_weight_seed: u64,
    /// Explicit latent weights; drawn from `N(0, 1)` with `latent_weight_seed` when absent.
    #[serde(default)]
    pub latent_weights: Option<Vec<f64>>,
    /// Standard deviation of the per-query offset added to the latent score.
    #[serde(default)]
    pub query_bias_std: f64,
    #[serde(default = "default_label_grades")]
    pub label_grades: u32,
    #[serde(default)]
    pub label_noise_rate: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_queries: 100,
            docs_per_query: default_docs_per_query(),
            feature_count: 10,
            latent_weight_seed: 0,
            latent_weights: None,
            query_bias_std: 0.0,
            label_grades: default_label_grades(),
            label_noise_rate: 0.0,
            rng_seed: 0,
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::InvalidConfig(m.to_string()));
        let (lo, hi) = self.docs_per_query;
        if self.num_queries == 0 {
            return bad("num_queries must be >= 1");
        }
        if lo == 0 || lo > hi {
            return bad("docs_per_query must satisfy 1 <= min <= max");
        }
        if self.feature_count == 0 {
            return bad("feature_count must be >= 1");
        }
        if self.label_grades == 0 {
            return bad("label_grades must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.label_noise_rate) {
            return bad("label_noise_rate must lie in [0, 1]");
        }
        if !(self.query_bias_std >= 0.0 && self.query_bias_std.is_finite()) {
            return bad("query_bias_std must be finite and >= 0");
        }
        if let Some(w) = &self.latent_weights {
            if w.len() != self.feature_count {
                return bad("latent_weights length must equal feature_count");
            }
        }
        Ok(())
    }

    pub fn weights(&self) -> Vec<f64> {
        match &self.latent_weights {
            Some(w) => w.clone(),
            None => {
                let mut r = rng::seeded(self.latent_weight_seed);
                (0..self.feature_count)
                    .map(|_| StandardNormal.sample(&mut r))
                    .collect()
            }
        }
    }
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Dataset, DataError> {
    cfg.validate()?;
    let k = cfg.feature_count;
    let w = cfg.weights();
    let mut r = rng::seeded(cfg.rng_seed);
    let bias_dist = Normal::new(0.0, cfg.query_bias_std).expect("validated std");

    let mut raw = Vec::with_capacity(cfg.num_queries);
    for _ in 0..cfg.num_queries {
        let n = r.random_range(cfg.docs_per_query.0..=cfg.docs_per_query.1);
        let features: Vec<f64> = (0..n * k).map(|_| r.random::<f64>()).collect();
        let bias = bias_dist.sample(&mut r);
        let latent: Vec<f64> = features
            .chunks_exact(k)
            .map(|row| row.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() + bias)
            .collect();
        raw.push((features, latent));
    }

    let (lo, hi) = raw
        .iter()
        .flat_map(|(_, l)| l.iter().copied())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let grades = cfg.label_grades;
    let bins = f64::from(grades + 1);
    let width = hi - lo;
    let grade_of = |v: f64| -> f64 {
        if width <= 0.0 {
            return 0.0;
        }
        let g = ((v - lo) / width * bins).floor() as i64;
        g.clamp(0, i64::from(grades)) as f64
    };

    let queries = raw
        .into_iter()
        .enumerate()
        .map(|(qi, (features, latent))| {
            let labels = latent
                .iter()
                .map(|&v| {
                    let clean = grade_of(v);
                    if cfg.label_noise_rate > 0.0 && r.random::<f64>() < cfg.label_noise_rate {
                        f64::from(r.random_range(0..=grades))
                    } else {
                        clean
                    }
                })
                .collect::<Vec<_>>();
            let n = labels.len();
            QueryList::new((qi + 1).to_string(), k, features, labels, (0..n).collect())
        })
        .collect();
    Ok(Dataset::new("synthetic", k, queries))
}

/// Splits at query granularity. Each part keeps the source order of its queries.
pub fn split(
    ds: &Dataset,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset), DataError> {
    let (tr, va, te) = fractions;
    if !(tr > 0.0 && va > 0.0 && te > 0.0) {
        return Err(DataError::InvalidFractions(format!(
            "every fraction must be positive, got ({tr}, {va}, {te})"
        )));
    }
    if ((tr + va + te) - 1.0).abs() > 1e-9 {
        return Err(DataError::InvalidFractions(format!(
            "fractions must sum to 1, got {}",
            tr + va + te
        )));
    }
    let total = ds.len();
    let n_train = (tr * total as f64).round() as usize;
    let n_valid = (va * total as f64).round() as usize;
    if n_train == 0 || n_valid == 0 || n_train + n_valid >= total {
        return Err(DataError::InvalidFractions(format!(
            "{total} queries cannot be split into three non-empty parts by ({tr}, {va}, {te})"
        )));
    }

    let mut idx: Vec<usize> = (0..total).collect();
    idx.shuffle(&mut rng::seeded(seed));
    let mut assignment = vec![2u8; total];
    for &i in &idx[..n_train] {
        assignment[i] = 0;
    }
    for &i in &idx[n_train..n_train + n_valid] {
        assignment[i] = 1;
    }

    let mut parts: [Vec<QueryList>; 3] = Default::default();
    for (q, &a) in ds.queries().iter().zip(&assignment) {
        parts[a as usize].push(q.clone());
    }
    let [train, valid, test] = parts;
    let k = ds.feature_count();
    Ok((
        Dataset::new(format!("{}-train", ds.name), k, train),
        Dataset::new(format!("{}-valid", ds.name), k, valid),
        Dataset::new(format!("{}-test", ds.name), k, test),
    ))
}

/// Adds i.i.d. `N(0, sigma²)` noise to every feature entry. Labels and doc ids are untouched.
pub fn augment_gaussian(ql: &QueryList, sigma: f64, rng: &mut Rng) -> QueryList {
    assert!(sigma >= 0.0, "sigma must be non-negative");
    if sigma == 0.0 {
        return ql.clone();
    }
    let mut out = ql.clone();
    for v in &mut out.features {
        let z: f64 = StandardNormal.sample(rng);
        *v += sigma * z;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Dataset, DataError> {
        parse_svmlight(text.as_bytes(), "t")
    }

    #[test]
    fn parses_two_rows_of_one_query() {
        let ds = parse("2 qid:1 1:0.5 2:0.0\n1 qid:1 1:0.1 2:1.0").unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.feature_count(), 2);
        let q = &ds.queries()[0];
        assert_eq!(q.labels, vec![2.0, 1.0]);
        assert_eq!(q.features(), &[0.5, 0.0, 0.1, 1.0]);
        assert_eq!(q.doc_ids, vec![0, 1]);
    }

    #[test]
    fn sparse_indices_are_zero_filled() {
        let ds = parse("0 qid:7 3:1.0").unwrap();
        assert_eq!(ds.feature_count(), 3);
        assert_eq!(ds.queries()[0].features(), &[0.0, 0.0, 1.0]);
        assert_eq!(ds.queries()[0].qid, "7");
    }

    #[test]
    fn bad_label_is_malformed() {
        assert!(matches!(
            parse("x qid:1 1:0.5"),
            Err(DataError::MalformedLine { line: 1, .. })
        ));
    }

    #[test]
    fn error_cases() {
        assert!(matches!(
            parse("1 qid:1 1:0.5\n-1 qid:1 1:0.2"),
            Err(DataError::NegativeLabel { line: 2 })
        ));
        assert!(matches!(parse("\n# only a comment\n"), Err(DataError::EmptyDataset)));
        assert!(matches!(
            parse("1 1:0.5"),
            Err(DataError::MalformedLine { line: 1, .. })
        ));
        assert!(matches!(
            parse("1 qid:1 0:0.5"),
            Err(DataError::MalformedLine { line: 1, .. })
        ));
        assert!(matches!(
            parse("1 qid:1 2:abc"),
            Err(DataError::MalformedLine { line: 1, .. })
        ));
    }

    #[test]
    fn comments_and_interleaved_qids() {
        let text = "1 qid:a 1:1 # doc x\n\n0 qid:b 2:1\n2 qid:a 1:3\n";
        let ds = parse(text).unwrap();
        let qids: Vec<_> = ds.queries().iter().map(|q| q.qid.as_str()).collect();
        assert_eq!(qids, ["a", "b"]);
        assert_eq!(ds.queries()[0].labels, vec![1.0, 2.0]);
        assert_eq!(ds.queries()[0].features(), &[1.0, 0.0, 3.0, 0.0]);
    }

    #[test]
    fn write_then_parse_is_identity() {
        let ds = parse("2 qid:1 1:0.5 3:0.25\n1 qid:1 2:1e-3\n0 qid:9 1:-7.5").unwrap();
        let mut buf = Vec::new();
        write_svmlight(&ds, &mut buf).unwrap();
        let back = parse_svmlight(buf.as_slice(), "t").unwrap();
        assert_eq!(back, ds);
    }

    fn cfg() -> SyntheticConfig {
        SyntheticConfig {
            num_queries: 30,
            docs_per_query: (5, 12),
            feature_count: 4,
            latent_weight_seed: 3,
            query_bias_std: 0.3,
            label_noise_rate: 0.2,
            rng_seed: 11,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn synthetic_monotone_without_noise() {
        let c = SyntheticConfig {
            num_queries: 1,
            docs_per_query: (50, 50),
            feature_count: 1,
            latent_weights: Some(vec![1.0]),
            ..SyntheticConfig::default()
        };
        let ds = generate_synthetic(&c).unwrap();
        let q = &ds.queries()[0];
        let mut pairs: Vec<(f64, f64)> = (0..q.len()).map(|i| (q.row(i)[0], q.labels[i])).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!(pairs.windows(2).all(|w| w[0].1 <= w[1].1));
        // Equal-width bins over the empirical range hit both extremes.
        assert_eq!(pairs.first().unwrap().1, 0.0);
        assert_eq!(pairs.last().unwrap().1, 4.0);
    }

    #[test]
    fn synthetic_is_deterministic() {
        assert_eq!(generate_synthetic(&cfg()).unwrap(), generate_synthetic(&cfg()).unwrap());
        let other = SyntheticConfig {
            rng_seed: 12,
            ..cfg()
        };
        assert_ne!(generate_synthetic(&cfg()).unwrap(), generate_synthetic(&other).unwrap());
    }

    #[test]
    fn synthetic_respects_shape() {
        let ds = generate_synthetic(&cfg()).unwrap();
        assert_eq!(ds.len(), 30);
        for q in ds.queries() {
            assert!((5..=12).contains(&q.len()));
            assert!(q.labels.iter().all(|&y| (0.0..=4.0).contains(&y) && y.fract() == 0.0));
            assert!(q.features().iter().all(|&x| (0.0..1.0).contains(&x)));
        }
    }

    #[test]
    fn full_noise_destroys_label_signal() {
        let c = SyntheticConfig {
            num_queries: 100,
            docs_per_query: (20, 20),
            feature_count: 1,
            latent_weights: Some(vec![1.0]),
            label_noise_rate: 1.0,
            rng_seed: 5,
            ..SyntheticConfig::default()
        };
        let ds = generate_synthetic(&c).unwrap();
        let (xs, ys): (Vec<f64>, Vec<f64>) = ds
            .queries()
            .iter()
            .flat_map(|q| (0..q.len()).map(move |i| (q.row(i)[0], q.labels[i])))
            .unzip();
        assert!(xs.len() >= 1000);
        let corr = pearson(&xs, &ys);
        // 2000 independent pairs: sd of the sample correlation is about 0.022.
        assert!(corr.abs() < 0.08, "correlation {corr}");

        let clean = generate_synthetic(&SyntheticConfig {
            label_noise_rate: 0.0,
            ..c
        })
        .unwrap();
        let (xs, ys): (Vec<f64>, Vec<f64>) = clean
            .queries()
            .iter()
            .flat_map(|q| (0..q.len()).map(move |i| (q.row(i)[0], q.labels[i])))
            .unzip();
        assert!(pearson(&xs, &ys) > 0.9);
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn invalid_synthetic_configs() {
        for bad in [
            SyntheticConfig { label_noise_rate: 1.5, ..cfg() },
            SyntheticConfig { docs_per_query: (0, 3), ..cfg() },
            SyntheticConfig { docs_per_query: (4, 3), ..cfg() },
            SyntheticConfig { num_queries: 0, ..cfg() },
            SyntheticConfig { latent_weights: Some(vec![1.0]), ..cfg() },
        ] {
            assert!(matches!(generate_synthetic(&bad), Err(DataError::InvalidConfig(_))));
        }
    }

    fn ten_queries() -> Dataset {
        generate_synthetic(&SyntheticConfig {
            num_queries: 10,
            docs_per_query: (3, 3),
            feature_count: 2,
            ..SyntheticConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn split_sizes_and_coverage() {
        let ds = ten_queries();
        let (a, b, c) = split(&ds, (0.8, 0.1, 0.1), 1).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (8, 1, 1));
        let mut qids: Vec<String> = [&a, &b, &c]
            .iter()
            .flat_map(|d| d.queries().iter().map(|q| q.qid.clone()))
            .collect();
        qids.sort();
        let mut orig: Vec<String> = ds.queries().iter().map(|q| q.qid.clone()).collect();
        orig.sort();
        assert_eq!(qids, orig);
        for q in a.queries().iter().chain(b.queries()).chain(c.queries()) {
            let src = ds.queries().iter().find(|o| o.qid == q.qid).unwrap();
            assert_eq!(q, src);
        }
    }

    #[test]
    fn split_is_deterministic_and_validates() {
        let ds = ten_queries();
        assert_eq!(
            split(&ds, (0.6, 0.2, 0.2), 4).unwrap(),
            split(&ds, (0.6, 0.2, 0.2), 4).unwrap()
        );
        assert!(matches!(
            split(&ds, (1.0, 0.0, 0.0), 4),
            Err(DataError::InvalidFractions(_))
        ));
        assert!(matches!(
            split(&ds, (0.5, 0.2, 0.2), 4),
            Err(DataError::InvalidFractions(_))
        ));
    }

    #[test]
    fn augmentation() {
        let q = ten_queries().queries()[0].clone();
        let mut r = rng::seeded(1);
        assert_eq!(augment_gaussian(&q, 0.0, &mut r), q);
        let a = augment_gaussian(&q, 0.1, &mut rng::seeded(9));
        let b = augment_gaussian(&q, 0.1, &mut rng::seeded(9));
        assert_eq!(a, b);
        assert_ne!(a.features(), q.features());
        assert_eq!(
            a.labels.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            q.labels.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(a.doc_ids, q.doc_ids);
    }
}
