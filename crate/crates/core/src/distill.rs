//! Teacher score transforms and the combined distillation objective
//! `(1 − α)·l_base(y, s) + α·l_distill(g(t), s)`.
//!
//! Teacher scores are frozen constants: no gradient flows into `g(t)`.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::loss::{LossError, LossKind};
use crate::model::{ModelError, ScoringModel};

#[derive(Debug, thiserror::Error)]
pub enum DistillError {
    #[error("InvalidSpec: {0}")]
    InvalidSpec(String),
    #[error("AlignmentError({qid}): {reason}")]
    AlignmentError { qid: String, reason: String },
    #[error("MalformedScoreFile({line}): {reason}")]
    MalformedScoreFile { line: usize, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

fn alignment(qid: &str, reason: impl Into<String>) -> DistillError {
    DistillError::AlignmentError {
        qid: qid.to_string(),
        reason: reason.into(),
    }
}

/// Map from raw teacher scores to distillation labels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TransformSpec {
    /// `max(a·t + b, 0)` with `a > 0`.
    Affine { a: f64, b: f64 },
    /// Per-list softmax of `t / T`.
    Softmax { temperature: f64 },
}

impl Default for TransformSpec {
    fn default() -> Self {
        TransformSpec::Affine { a: 1.0, b: 0.0 }
    }
}

impl TransformSpec {
    pub fn validate(&self) -> Result<(), DistillError> {
        match *self {
            TransformSpec::Affine { a, b } if !(a > 0.0 && a.is_finite() && b.is_finite()) => Err(
                DistillError::InvalidSpec(format!("affine slope must be positive and finite, got a={a}, b={b}")),
            ),
            TransformSpec::Softmax { temperature } if !(temperature > 0.0 && temperature.is_finite()) => {
                Err(DistillError::InvalidSpec(format!(
                    "softmax temperature must be positive, got {temperature}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Non-negative distillation labels for one list of teacher scores.
    pub fn apply(&self, t: &[f64]) -> Vec<f64> {
        match *self {
            TransformSpec::Affine { a, b } => t.iter().map(|&v| (a * v + b).max(0.0)).collect(),
            TransformSpec::Softmax { temperature } => {
                let scaled: Vec<f64> = t.iter().map(|v| v / temperature).collect();
                crate::loss::softmax(&scaled)
            }
        }
    }
}

/// `--transform a,b` or `--transform softmax:T`.
impl FromStr for TransformSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let spec = if let Some(t) = s.strip_prefix("softmax:") {
            let temperature = t.trim().parse().map_err(|_| format!("bad temperature {t:?}"))?;
            TransformSpec::Softmax { temperature }
        } else {
            let (a, b) = s
                .split_once(',')
                .ok_or_else(|| format!("expected `a,b` or `softmax:T`, got {s:?}"))?;
            TransformSpec::Affine {
                a: a.trim().parse().map_err(|_| format!("bad slope {a:?}"))?,
                b: b.trim().parse().map_err(|_| format!("bad intercept {b:?}"))?,
            }
        };
        spec.validate().map_err(|e| e.to_string())?;
        Ok(spec)
    }
}

impl fmt::Display for TransformSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransformSpec::Affine { a, b } => write!(f, "{a},{b}"),
            TransformSpec::Softmax { temperature } => write!(f, "softmax:{temperature}"),
        }
    }
}

pub fn transform_scores(spec: &TransformSpec, t: &[f64]) -> Vec<f64> {
    spec.apply(t)
}

fn default_alpha() -> f64 {
    0.5
}

fn default_softmax() -> LossKind {
    LossKind::Softmax
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistillSpec {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub transform: TransformSpec,
    #[serde(default = "default_softmax")]
    pub base_loss: LossKind,
    #[serde(default = "default_softmax")]
    pub distill_loss: LossKind,
}

impl Default for DistillSpec {
    fn default() -> Self {
        Self {
            alpha: default_alpha(),
            transform: TransformSpec::default(),
            base_loss: LossKind::Softmax,
            distill_loss: LossKind::Softmax,
        }
    }
}

impl DistillSpec {
    /// Listwise self-distillation with both objectives on the softmax loss.
    pub fn listwise(alpha: f64, transform: TransformSpec) -> Self {
        Self {
            alpha,
            transform,
            ..Self::default()
        }
    }

    /// Pointwise ablation: the distillation term is squared error on `g(t)`.
    pub fn pointwise(alpha: f64, transform: TransformSpec, base_loss: LossKind) -> Self {
        Self {
            alpha,
            transform,
            base_loss,
            distill_loss: LossKind::Mse,
        }
    }

    pub fn validate(&self) -> Result<(), DistillError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(DistillError::InvalidSpec(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        self.transform.validate()
    }
}

/// Combined objective for one list. Returns the value and `∂/∂s`.
pub fn sdr_loss(
    y: &[f64],
    t_transformed: &[f64],
    s: &[f64],
    spec: &DistillSpec,
) -> Result<(f64, Vec<f64>), LossError> {
    if t_transformed.len() != s.len() {
        return Err(LossError::LengthMismatch {
            labels: t_transformed.len(),
            scores: s.len(),
        });
    }
    let alpha = spec.alpha;
    let (base_v, base_g) = spec.base_loss.value_and_grad(y, s)?;
    let (dist_v, dist_g) = spec.distill_loss.value_and_grad(t_transformed, s)?;
    let value = (1.0 - alpha) * base_v + alpha * dist_v;
    let grad = base_g
        .iter()
        .zip(&dist_g)
        .map(|(b, d)| (1.0 - alpha) * b + alpha * d)
        .collect();
    Ok((value, grad))
}

/// `Σ_i (g(t_i) − s_i)²` and its gradient.
pub fn pointwise_distill_loss(t_transformed: &[f64], s: &[f64]) -> Result<(f64, Vec<f64>), LossError> {
    LossKind::Mse.value_and_grad(t_transformed, s)
}

/// Raw teacher scores aligned row-for-row with a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct TeacherScores {
    pub source: String,
    pub qids: Vec<String>,
    pub scores: Vec<Vec<f64>>,
}

impl TeacherScores {
    pub fn transformed(&self, spec: &TransformSpec) -> Vec<Vec<f64>> {
        self.scores.iter().map(|t| spec.apply(t)).collect()
    }

    /// Checks qid order and list lengths against `ds`.
    pub fn check_alignment(&self, ds: &Dataset) -> Result<(), DistillError> {
        if self.qids.len() != ds.len() {
            let missing = ds
                .queries()
                .iter()
                .find(|q| !self.qids.contains(&q.qid))
                .map_or_else(|| self.qids.last().cloned().unwrap_or_default(), |q| q.qid.clone());
            return Err(alignment(
                &missing,
                format!("{} scored queries vs {} in dataset", self.qids.len(), ds.len()),
            ));
        }
        for ((qid, s), q) in self.qids.iter().zip(&self.scores).zip(ds.queries()) {
            if *qid != q.qid {
                return Err(alignment(&q.qid, format!("teacher scores list qid {qid} at this position")));
            }
            if s.len() != q.len() {
                return Err(alignment(&q.qid, format!("{} scores for {} documents", s.len(), q.len())));
            }
        }
        Ok(())
    }

    /// TSV: `#teacher <id>` header, then `qid\tdoc_id\tscore` in dataset order.
    pub fn write_tsv<W: Write>(&self, ds: &Dataset, mut out: W) -> Result<(), DistillError> {
        self.check_alignment(ds)?;
        writeln!(out, "#teacher {}", self.source)?;
        for (q, s) in ds.queries().iter().zip(&self.scores) {
            for (doc, score) in q.doc_ids.iter().zip(s) {
                writeln!(out, "{}\t{}\t{:?}", q.qid, doc, score)?;
            }
        }
        Ok(())
    }
}

/// Inference-mode teacher scores for every document of `ds`.
pub fn export_teacher_scores(
    model: &ScoringModel,
    ds: &Dataset,
    source: &str,
) -> Result<TeacherScores, DistillError> {
    let scores = ds
        .queries()
        .iter()
        .map(|q| model.score(q))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TeacherScores {
        source: source.to_string(),
        qids: ds.queries().iter().map(|q| q.qid.clone()).collect(),
        scores,
    })
}

/// Reads a teacher score file and realigns it to `ds` by `(qid, doc_id)`.
pub fn load_teacher_scores<R: BufRead>(reader: R, ds: &Dataset) -> Result<TeacherScores, DistillError> {
    let mut source = String::new();
    let mut by_qid: HashMap<String, HashMap<usize, f64>> = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let malformed = |reason: String| DistillError::MalformedScoreFile {
            line: line_no,
            reason,
        };
        if let Some(rest) = line.strip_prefix("#teacher") {
            source = rest.trim().to_string();
            continue;
        }
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(malformed(format!("expected 3 tab-separated fields, got {}", fields.len())));
        }
        let doc: usize = fields[1]
            .parse()
            .map_err(|_| malformed(format!("bad doc id {:?}", fields[1])))?;
        let score: f64 = fields[2]
            .parse()
            .map_err(|_| malformed(format!("bad score {:?}", fields[2])))?;
        if by_qid
            .entry(fields[0].to_string())
            .or_default()
            .insert(doc, score)
            .is_some()
        {
            return Err(alignment(fields[0], format!("doc id {doc} listed twice")));
        }
    }

    let mut scores = Vec::with_capacity(ds.len());
    for q in ds.queries() {
        let docs = by_qid
            .remove(&q.qid)
            .ok_or_else(|| alignment(&q.qid, "query missing from teacher score file"))?;
        if docs.len() != q.len() {
            return Err(alignment(
                &q.qid,
                format!("{} scores for {} documents", docs.len(), q.len()),
            ));
        }
        let row = q
            .doc_ids
            .iter()
            .map(|d| {
                docs.get(d)
                    .copied()
                    .ok_or_else(|| alignment(&q.qid, format!("no score for doc id {d}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        scores.push(row);
    }
    if let Some(extra) = by_qid.keys().min() {
        return Err(alignment(extra, "query not present in dataset"));
    }
    Ok(TeacherScores {
        source,
        qids: ds.queries().iter().map(|q| q.qid.clone()).collect(),
        scores,
    })
}
