//! Mini-batch Adam training of scoring models, optionally against a frozen
//! teacher, with early stopping on validation NDCG@5.
//!
//! A batch is a set of whole query lists; the objective is the mean per-query
//! loss over the batch. Gradients are reduced in batch order, so a run is a
//! pure function of its config and data.

use std::borrow::Cow;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{augment_gaussian, Dataset, QueryList};
use crate::distill::{export_teacher_scores, sdr_loss, DistillError, DistillSpec, TeacherScores};
use crate::loss::{LossError, LossKind};
use crate::metrics::{evaluate_dataset, MetricReport, DEFAULT_KS};
use crate::model::{ModelError, ParamGrads, ScoringModel};
use crate::rng::{self, derive_seed};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("ConfigError: {0}")]
    Config(String),
    #[error(transparent)]
    Alignment(#[from] DistillError),
    #[error("NonFiniteLoss(epoch {epoch}, batch {batch})")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(params: usize, lr: f64, betas: (f64, f64), eps: f64) -> Self {
        Self {
            lr,
            beta1: betas.0,
            beta2: betas.1,
            eps,
            m: vec![0.0; params],
            v: vec![0.0; params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        let step = self.lr * bc2.sqrt() / bc1;
        let eps = self.eps * bc2.sqrt();
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= step * *m / (v.sqrt() + eps);
        }
    }
}

fn default_lr() -> f64 {
    1e-3
}
fn default_betas() -> (f64, f64) {
    (0.9, 0.999)
}
fn default_eps() -> f64 {
    1e-8
}
fn default_batch() -> usize {
    32
}
fn default_epochs() -> usize {
    100
}
fn default_patience() -> usize {
    20
}
fn default_loss() -> LossKind {
    LossKind::Softmax
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub layer_dims: Vec<usize>,
    #[serde(default = "default_loss")]
    pub loss: LossKind,
    /// When set, training minimizes the combined objective; `loss` must match
    /// `distill.base_loss`.
    #[serde(default)]
    pub distill: Option<DistillSpec>,
    /// Teacher score file for `distill`; read by the CLI.
    #[serde(default)]
    pub teacher_scores: Option<PathBuf>,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_betas")]
    pub adam_betas: (f64, f64),
    #[serde(default = "default_eps")]
    pub adam_eps: f64,
    #[serde(default = "default_batch")]
    pub batch_queries: usize,
    #[serde(default = "default_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default)]
    pub dropout_rate: f64,
    #[serde(default)]
    pub augment_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(layer_dims: Vec<usize>) -> Self {
        Self {
            layer_dims,
            loss: default_loss(),
            distill: None,
            teacher_scores: None,
            learning_rate: default_lr(),
            adam_betas: default_betas(),
            adam_eps: default_eps(),
            batch_queries: default_batch(),
            max_epochs: default_epochs(),
            patience: default_patience(),
            dropout_rate: 0.0,
            augment_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.patience == 0 {
            return bad("patience must be >= 1".into());
        }
        if self.batch_queries == 0 {
            return bad("batch_queries must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate must lie in [0, 1), got {}", self.dropout_rate));
        }
        if !(self.augment_sigma >= 0.0) {
            return bad(format!("augment_sigma must be >= 0, got {}", self.augment_sigma));
        }
        let (b1, b2) = self.adam_betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return bad(format!("adam_betas must lie in [0, 1), got {:?}", self.adam_betas));
        }
        if let Some(d) = &self.distill {
            d.validate()?;
            if d.base_loss != self.loss {
                return bad(format!(
                    "distill.base_loss ({}) differs from loss ({})",
                    d.base_loss, self.loss
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_ndcg5: f64,
    pub valid_ndcg5: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch - 1]
    }

    /// Equality ignoring wall-clock time.
    pub fn same_trajectory(&self, other: &Self) -> bool {
        self.best_epoch == other.best_epoch
            && self.epochs.len() == other.epochs.len()
            && self.epochs.iter().zip(&other.epochs).all(|(a, b)| {
                a.epoch == b.epoch
                    && a.train_loss.to_bits() == b.train_loss.to_bits()
                    && a.train_ndcg5.to_bits() == b.train_ndcg5.to_bits()
                    && a.valid_ndcg5.to_bits() == b.valid_ndcg5.to_bits()
            })
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "epoch,train_loss,train_ndcg5,valid_ndcg5")?;
        for e in &self.epochs {
            writeln!(out, "{},{},{},{}", e.epoch, e.train_loss, e.train_ndcg5, e.valid_ndcg5)?;
        }
        Ok(())
    }
}

fn mean_ndcg5(model: &ScoringModel, ds: &Dataset) -> Result<f64, ModelError> {
    Ok(evaluate_dataset(model, ds, &[5])?.means[0])
}

/// Trains a fresh model. `teacher` is required exactly when `cfg.distill` is set.
pub fn train(
    cfg: &TrainConfig,
    train_ds: &Dataset,
    valid_ds: &Dataset,
    teacher: Option<&TeacherScores>,
) -> Result<(ScoringModel, TrainHistory), TrainError> {
    cfg.validate()?;
    if train_ds.is_empty() || valid_ds.is_empty() {
        return Err(TrainError::Config("training and validation sets must be non-empty".into()));
    }
    let model = ScoringModel::init(&cfg.layer_dims, derive_seed(cfg.seed, "init"))?
        .with_dropout(cfg.dropout_rate)?;
    for ds in [train_ds, valid_ds] {
        if ds.feature_count() != model.input_dim() {
            return Err(ModelError::ShapeMismatch {
                expected: model.input_dim(),
                got: ds.feature_count(),
            }
            .into());
        }
    }

    let targets: Option<(DistillSpec, Vec<Vec<f64>>)> = match (&cfg.distill, teacher) {
        (Some(spec), Some(t)) => {
            t.check_alignment(train_ds)?;
            Some((*spec, t.transformed(&spec.transform)))
        }
        (Some(_), None) => {
            return Err(TrainError::Config("distillation requires teacher scores".into()));
        }
        (None, Some(_)) => {
            return Err(TrainError::Config("teacher scores given without a distill spec".into()));
        }
        (None, None) => None,
    };

    let mut model = model;
    let mut rng = rng::seeded(derive_seed(cfg.seed, "train"));
    let mut adam = Adam::new(model.param_count(), cfg.learning_rate, cfg.adam_betas, cfg.adam_eps);
    let mut grads = ParamGrads::zeros_like(&model);
    let mut order: Vec<usize> = (0..train_ds.len()).collect();
    let queries = train_ds.queries();

    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64, Vec<f64>)> = None;

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut total_loss = 0.0;
        for (batch, chunk) in order.chunks(cfg.batch_queries).enumerate() {
            grads.fill_zero();
            let scale = 1.0 / chunk.len() as f64;
            let mut batch_loss = 0.0;
            for &qi in chunk {
                let q: Cow<QueryList> = if cfg.augment_sigma > 0.0 {
                    Cow::Owned(augment_gaussian(&queries[qi], cfg.augment_sigma, &mut rng))
                } else {
                    Cow::Borrowed(&queries[qi])
                };
                let (s, cache) = model.forward(&q, true, &mut rng)?;
                let (value, g) = match &targets {
                    None => cfg.loss.value_and_grad(&q.labels, &s)?,
                    Some((spec, t)) => sdr_loss(&q.labels, &t[qi], &s, spec)?,
                };
                batch_loss += value;
                model.backward_into(&cache, &g, scale, &mut grads)?;
            }
            if !batch_loss.is_finite() || !grads.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch });
            }
            adam.step(model.params_mut(), grads.as_slice());
            if model.params().iter().any(|p| !p.is_finite()) {
                return Err(TrainError::NonFiniteLoss { epoch, batch });
            }
            total_loss += batch_loss;
        }

        let train_ndcg5 = mean_ndcg5(&model, train_ds)?;
        let valid_ndcg5 = mean_ndcg5(&model, valid_ds)?;
        epochs.push(EpochRecord {
            epoch,
            train_loss: total_loss / train_ds.len() as f64,
            train_ndcg5,
            valid_ndcg5,
            seconds: started.elapsed().as_secs_f64(),
        });
        if best.as_ref().map_or(true, |(_, v, _)| valid_ndcg5 > *v) {
            best = Some((epoch, valid_ndcg5, model.params().to_vec()));
        }
        let best_epoch = best.as_ref().map_or(epoch, |b| b.0);
        if epoch - best_epoch >= cfg.patience {
            break;
        }
    }

    let (best_epoch, _, params) = best.ok_or_else(|| TrainError::Config("max_epochs must be >= 1".into()))?;
    model.params_mut().copy_from_slice(&params);
    Ok((model, TrainHistory { epochs, best_epoch }))
}

/// Mean of per-model inference scores.
pub fn ensemble_scores(models: &[ScoringModel], ql: &QueryList) -> Result<Vec<f64>, ModelError> {
    let first = models.first().ok_or(ModelError::ShapeMismatch { expected: 1, got: 0 })?;
    let mut acc = vec![0.0; ql.len()];
    for m in models {
        if m.dims() != first.dims() {
            return Err(ModelError::ShapeMismatch {
                expected: first.param_count(),
                got: m.param_count(),
            });
        }
        for (a, s) in acc.iter_mut().zip(m.score(ql)?) {
            *a += s;
        }
    }
    let k = models.len() as f64;
    acc.iter_mut().for_each(|a| *a /= k);
    Ok(acc)
}

pub struct Splits<'a> {
    pub train: &'a Dataset,
    pub valid: &'a Dataset,
    pub test: &'a Dataset,
}

/// What a student changes relative to the teacher's config.
#[derive(Clone, Debug, PartialEq)]
pub struct StudentOverrides {
    pub distill: DistillSpec,
    /// Defaults to a seed derived from the teacher's.
    pub seed: Option<u64>,
    /// Must equal the teacher's dims when given.
    pub layer_dims: Option<Vec<usize>>,
    pub learning_rate: Option<f64>,
    pub max_epochs: Option<usize>,
}

impl StudentOverrides {
    pub fn new(distill: DistillSpec) -> Self {
        Self {
            distill,
            seed: None,
            layer_dims: None,
            learning_rate: None,
            max_epochs: None,
        }
    }

    pub fn student_config(&self, teacher_cfg: &TrainConfig) -> Result<TrainConfig, TrainError> {
        if let Some(dims) = &self.layer_dims {
            if *dims != teacher_cfg.layer_dims {
                return Err(TrainError::Config(format!(
                    "student dims {dims:?} differ from teacher dims {:?}; self-distillation needs identical parameterization",
                    teacher_cfg.layer_dims
                )));
            }
        }
        let mut cfg = teacher_cfg.clone();
        cfg.loss = self.distill.base_loss;
        cfg.distill = Some(self.distill);
        cfg.seed = self.seed.unwrap_or_else(|| derive_seed(teacher_cfg.seed, "student"));
        if let Some(lr) = self.learning_rate {
            cfg.learning_rate = lr;
        }
        if let Some(e) = self.max_epochs {
            cfg.max_epochs = e;
        }
        Ok(cfg)
    }
}

#[derive(Clone, Debug)]
pub struct StudentRun {
    pub model: ScoringModel,
    pub history: TrainHistory,
    pub test: MetricReport,
    pub train_ndcg5: f64,
}

#[derive(Clone, Debug)]
pub struct PipelineOutcome {
    pub teacher: StudentRun,
    pub student: StudentRun,
}

impl PipelineOutcome {
    pub fn comparison(&self) -> Comparison<'_> {
        Comparison(self)
    }
}

pub struct Comparison<'a>(&'a PipelineOutcome);

impl fmt::Display for Comparison<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = &self.0.teacher.test;
        let s = &self.0.student.test;
        write!(f, "model")?;
        for k in &t.ks {
            write!(f, "\tndcg@{k}")?;
        }
        writeln!(f)?;
        for (name, r) in [("teacher", t), ("student", s)] {
            write!(f, "{name}")?;
            for v in &r.means {
                write!(f, "\t{v:.6}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

fn finish_run(
    model: ScoringModel,
    history: TrainHistory,
    splits: &Splits<'_>,
) -> Result<StudentRun, TrainError> {
    let test = evaluate_dataset(&model, splits.test, &DEFAULT_KS)?;
    let train_ndcg5 = history.best().train_ndcg5;
    Ok(StudentRun {
        model,
        history,
        test,
        train_ndcg5,
    })
}

pub fn train_teacher(cfg: &TrainConfig, splits: &Splits<'_>) -> Result<StudentRun, TrainError> {
    if cfg.distill.is_some() {
        return Err(TrainError::Config("the teacher is trained on labels only".into()));
    }
    let (model, history) = train(cfg, splits.train, splits.valid, None)?;
    finish_run(model, history, splits)
}

/// Phase two: distill a fresh student from an already trained teacher.
pub fn train_student(
    teacher: &ScoringModel,
    teacher_cfg: &TrainConfig,
    overrides: &StudentOverrides,
    splits: &Splits<'_>,
) -> Result<StudentRun, TrainError> {
    let cfg = overrides.student_config(teacher_cfg)?;
    if teacher.dims() != cfg.layer_dims.as_slice() {
        return Err(TrainError::Config("teacher model dims differ from the configured dims".into()));
    }
    let scores = export_teacher_scores(teacher, splits.train, "teacher")?;
    let (model, history) = train(&cfg, splits.train, splits.valid, Some(&scores))?;
    finish_run(model, history, splits)
}

/// Trains the teacher on labels, then a same-shaped student on the combined objective.
pub fn self_distill_pipeline(
    teacher_cfg: &TrainConfig,
    overrides: &StudentOverrides,
    splits: &Splits<'_>,
) -> Result<PipelineOutcome, TrainError> {
    // Reject a mismatched student before spending any time on the teacher.
    overrides.student_config(teacher_cfg)?;
    let teacher = train_teacher(teacher_cfg, splits)?;
    let student = train_student(&teacher.model, teacher_cfg, overrides, splits)?;
    Ok(PipelineOutcome { teacher, student })
}
