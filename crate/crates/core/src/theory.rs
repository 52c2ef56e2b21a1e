//! The one-parameter toy analysis of self-distillation and the noisy-label
//! mixing sweep.
//!
//! The toy model is `f(x, b) = 2|x − b|` fit by half squared error. Because it
//! is piecewise linear in `b`, minima are located by a dense grid scan followed
//! by golden-section refinement rather than by gradient descent.

use std::fmt;
use std::io::Write;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::loss::LossKind;
use crate::model::{ParamGrads, ScoringModel};
use crate::rng::{self, derive_seed};
use crate::train::Adam;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TheoryError {
    #[error("InvalidCounts: {0}")]
    InvalidCounts(String),
    #[error("LengthMismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TheoryInstance {
    pub train: Vec<Point>,
    pub test: Vec<Point>,
}

impl Default for TheoryInstance {
    fn default() -> Self {
        Self {
            train: vec![Point::new(-1.0, 2.0), Point::new(0.0, 1.0), Point::new(1.0, 2.0)],
            test: vec![Point::new(0.0, 0.0), Point::new(0.5, 1.0)],
        }
    }
}

pub fn toy_model(x: f64, b: f64) -> f64 {
    2.0 * (x - b).abs()
}

/// `½ Σ (y_i − 2|x_i − b|)²`.
pub fn toy_loss(b: f64, points: &[Point]) -> f64 {
    0.5 * points.iter().map(|p| (p.y - toy_model(p.x, b)).powi(2)).sum::<f64>()
}

/// Mean squared error of the toy model over `points`.
pub fn toy_mse(b: f64, points: &[Point]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    points.iter().map(|p| (p.y - toy_model(p.x, b)).powi(2)).sum::<f64>() / points.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinimaSearch {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
    /// Bracket width at which golden-section refinement stops.
    pub tol: f64,
    /// Minima closer than this are merged.
    pub dedup: f64,
}

impl Default for MinimaSearch {
    fn default() -> Self {
        Self {
            lo: -2.0,
            hi: 2.0,
            step: 1e-4,
            tol: 1e-10,
            dedup: 1e-7,
        }
    }
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut c: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = c - inv_phi * (c - a);
    let mut x2 = a + inv_phi * (c - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while c - a > tol {
        if f1 <= f2 {
            c = x2;
            x2 = x1;
            f2 = f1;
            x1 = c - inv_phi * (c - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (c - a);
            f2 = f(x2);
        }
    }
    (a + c) / 2.0
}

/// Between kinks (the training `x` values) the loss is an exact quadratic in
/// `b`, so one parabolic step through three nearby points lands on the vertex.
fn parabolic_polish(b: f64, points: &[Point], h: f64) -> f64 {
    if points.iter().any(|p| (p.x - b).abs() <= h) {
        return b;
    }
    let (fm, f0, fp) = (toy_loss(b - h, points), toy_loss(b, points), toy_loss(b + h, points));
    let curvature = fp - 2.0 * f0 + fm;
    if curvature <= 0.0 {
        return b;
    }
    let v = b - h * (fp - fm) / (2.0 * curvature);
    if (v - b).abs() < h && toy_loss(v, points) <= f0 {
        v
    } else {
        b
    }
}

/// Strict interior local minima of `toy_loss` over the search range.
///
/// Flat stretches of the grid (plateaus) are not reported.
pub fn find_minima(points: &[Point], search: &MinimaSearch) -> Vec<f64> {
    let steps = ((search.hi - search.lo) / search.step).round() as usize;
    let grid: Vec<f64> = (0..=steps).map(|i| search.lo + i as f64 * search.step).collect();
    let values: Vec<f64> = grid.iter().map(|&b| toy_loss(b, points)).collect();
    let mut minima: Vec<f64> = Vec::new();
    for i in 1..grid.len().saturating_sub(1) {
        if !(values[i] < values[i - 1] && values[i] <= values[i + 1]) {
            continue;
        }
        // A two-point flat bottom brackets a minimum between grid points; any
        // longer flat run is a plateau.
        let right = if values[i] < values[i + 1] {
            i + 1
        } else if i + 2 < grid.len() && values[i + 2] > values[i + 1] {
            i + 2
        } else {
            continue;
        };
        let b = golden_section(|b| toy_loss(b, points), grid[i - 1], grid[right], search.tol);
        let b = parabolic_polish(b, points, search.step);
        if minima.last().map_or(true, |&m| (b - m).abs() > search.dedup) {
            minima.push(b);
        }
    }
    minima
}

/// `(1 − α)·y + α·t`.
pub fn student_labels(y: &[f64], teacher: &[f64], alpha: f64) -> Result<Vec<f64>, TheoryError> {
    if y.len() != teacher.len() {
        return Err(TheoryError::LengthMismatch(y.len(), teacher.len()));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(TheoryError::InvalidCounts(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(y.iter().zip(teacher).map(|(y, t)| (1.0 - alpha) * y + alpha * t).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Theorem1Report {
    pub teacher_minima: Vec<f64>,
    pub teacher_b: f64,
    pub teacher_scores: Vec<f64>,
    pub student_labels: Vec<f64>,
    pub student_minima: Vec<f64>,
    /// The student minimum that is not the teacher's own solution.
    pub student_b: f64,
    pub teacher_fixed_point_retained: bool,
    pub teacher_test_mse: f64,
    pub student_test_mse: f64,
}

/// Among the minima with the lowest loss, the smallest `b`.
fn pick_best(minima: &[f64], points: &[Point]) -> Option<f64> {
    let best = minima.iter().map(|&b| toy_loss(b, points)).fold(f64::INFINITY, f64::min);
    minima
        .iter()
        .copied()
        .find(|&b| toy_loss(b, points) <= best + 1e-12)
}

pub fn run_theorem1(instance: &TheoryInstance, alpha: f64) -> Theorem1Report {
    let search = MinimaSearch::default();
    let teacher_minima = find_minima(&instance.train, &search);
    let teacher_b = pick_best(&teacher_minima, &instance.train).expect("teacher loss has a minimum");
    let teacher_scores: Vec<f64> = instance.train.iter().map(|p| toy_model(p.x, teacher_b)).collect();
    let y: Vec<f64> = instance.train.iter().map(|p| p.y).collect();
    let labels = student_labels(&y, &teacher_scores, alpha).expect("same length");
    let student_points: Vec<Point> = instance
        .train
        .iter()
        .zip(&labels)
        .map(|(p, &y)| Point::new(p.x, y))
        .collect();
    let student_minima = find_minima(&student_points, &search);
    let retained = student_minima.iter().any(|&b| (b - teacher_b).abs() < 1e-6);
    let others: Vec<f64> = student_minima
        .iter()
        .copied()
        .filter(|&b| (b - teacher_b).abs() >= 1e-6)
        .collect();
    let student_b = pick_best(&others, &student_points).unwrap_or(teacher_b);
    Theorem1Report {
        teacher_test_mse: toy_mse(teacher_b, &instance.test),
        student_test_mse: toy_mse(student_b, &instance.test),
        teacher_minima,
        teacher_b,
        teacher_scores,
        student_labels: labels,
        student_minima,
        student_b,
        teacher_fixed_point_retained: retained,
    }
}

/// The three-point example with equal weighting of labels and teacher scores.
pub fn run_theorem1_demo() -> Theorem1Report {
    run_theorem1(&TheoryInstance::default(), 0.5)
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(", ")
}

impl fmt::Display for Theorem1Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "teacher minima      : {}", fmt_list(&self.teacher_minima))?;
        writeln!(f, "teacher b           : {:.6}", self.teacher_b)?;
        writeln!(f, "teacher scores      : {}", fmt_list(&self.teacher_scores))?;
        writeln!(f, "student labels      : {}", fmt_list(&self.student_labels))?;
        writeln!(f, "student minima      : {}", fmt_list(&self.student_minima))?;
        writeln!(
            f,
            "teacher fixed point : {}",
            if self.teacher_fixed_point_retained { "retained" } else { "absent" }
        )?;
        writeln!(f, "student b           : {:.6}", self.student_b)?;
        writeln!(f, "teacher test MSE    : {:.6}", self.teacher_test_mse)?;
        write!(f, "student test MSE    : {:.6}", self.student_test_mse)
    }
}

/// `n / (n + m)`.
pub fn alpha_star(n: usize, m: usize) -> Result<f64, TheoryError> {
    if n == 0 || m > n {
        return Err(TheoryError::InvalidCounts(format!("need n >= 1 and 0 <= m <= n, got n={n}, m={m}")));
    }
    Ok(n as f64 / (n + m) as f64)
}

/// Ground-truth regression function for the noisy-label sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GroundTruth {
    /// `sin(freq · π · x)` on `[-1, 1]`.
    Sine { freq: f64 },
    /// `2|x − b|`, the toy model itself.
    Vee { b: f64 },
}

impl GroundTruth {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            GroundTruth::Sine { freq } => (freq * std::f64::consts::PI * x).sin(),
            GroundTruth::Vee { b } => toy_model(x, b),
        }
    }
}

/// Monte-Carlo study of mixing weights when `m` of `n` labels are wrong.
///
/// Every trial draws `n` inputs on `[-1, 1]`, labels them with `truth`, and
/// replaces `m` labels by uniform draws on `[-wrong_label_range, wrong_label_range]`.
/// Teacher and students are the same small ReLU network fit by full-batch Adam
/// on squared error for a fixed number of steps from a fresh initialization.
/// Within a trial all students share one initialization seed so the α curve
/// is paired.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoisySimConfig {
    pub n: usize,
    pub m: usize,
    pub alphas: Vec<f64>,
    pub trials: usize,
    pub rng_seed: u64,
    pub truth: GroundTruth,
    pub wrong_label_range: f64,
    pub hidden: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub test_points: usize,
}

impl Default for NoisySimConfig {
    fn default() -> Self {
        Self {
            n: 100,
            m: 10,
            alphas: (0..=10).map(|i| f64::from(i) / 10.0).collect(),
            trials: 200,
            rng_seed: 0,
            truth: GroundTruth::Sine { freq: 1.0 },
            wrong_label_range: 2.0,
            hidden: 16,
            steps: 1000,
            learning_rate: 0.01,
            test_points: 201,
        }
    }
}

impl NoisySimConfig {
    fn validate(&self) -> Result<(), TheoryError> {
        let bad = |m: String| Err(TheoryError::InvalidCounts(m));
        if self.n == 0 || self.m > self.n {
            return bad(format!("need n >= 1 and 0 <= m <= n, got n={}, m={}", self.n, self.m));
        }
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return bad("alpha grid must be non-empty and inside [0, 1]".into());
        }
        if self.hidden == 0 || self.steps == 0 || self.test_points == 0 {
            return bad("hidden, steps and test_points must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlphaRow {
    pub alpha: f64,
    pub mean_test_error: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoisySweepReport {
    pub rows: Vec<AlphaRow>,
    /// Mean test error of the teachers themselves.
    pub teacher_mean_test_error: f64,
    pub best_alpha: f64,
    pub alpha_star: f64,
}

impl NoisySweepReport {
    pub fn row(&self, alpha: f64) -> Option<&AlphaRow> {
        self.rows.iter().find(|r| (r.alpha - alpha).abs() < 1e-12)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "alpha,mean_test_error,std")?;
        for r in &self.rows {
            writeln!(out, "{},{},{}", r.alpha, r.mean_test_error, r.std)?;
        }
        Ok(())
    }
}

impl fmt::Display for NoisySweepReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "alpha  mean_test_error  std")?;
        for r in &self.rows {
            writeln!(f, "{:<6.3} {:<16.6} {:.6}", r.alpha, r.mean_test_error, r.std)?;
        }
        writeln!(f, "teacher mean test error: {:.6}", self.teacher_mean_test_error)?;
        writeln!(f, "best alpha: {:.3}", self.best_alpha)?;
        write!(f, "alpha* = n/(n+m): {:.4}", self.alpha_star)
    }
}

/// Fits `[1, hidden, hidden, 1]` to `(xs, ys)` by full-batch Adam on squared error.
pub fn fit_regressor(xs: &[f64], ys: &[f64], hidden: usize, steps: usize, lr: f64, seed: u64) -> ScoringModel {
    let mut model = ScoringModel::init(&[1, hidden, hidden, 1], seed).expect("valid dims");
    let mut adam = Adam::new(model.param_count(), lr, (0.9, 0.999), 1e-8);
    let mut r = rng::seeded(seed);
    for _ in 0..steps {
        let (s, cache) = model.forward_matrix(xs, xs.len(), false, &mut r).expect("1-d inputs");
        let g = LossKind::Mse.grad(ys, &s).expect("same length");
        let mut grads = ParamGrads::zeros_like(&model);
        model.backward_into(&cache, &g, 1.0, &mut grads).expect("matching cache");
        adam.step(model.params_mut(), grads.as_slice());
    }
    model
}

fn mse_against(model: &ScoringModel, xs: &[f64], truth: &[f64]) -> f64 {
    let s = model.score_matrix(xs, xs.len()).expect("1-d inputs");
    s.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / xs.len() as f64
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

pub fn noisy_label_simulation(cfg: &NoisySimConfig) -> Result<NoisySweepReport, TheoryError> {
    cfg.validate()?;
    let test_x: Vec<f64> = (0..cfg.test_points)
        .map(|i| {
            if cfg.test_points == 1 {
                0.0
            } else {
                -1.0 + 2.0 * i as f64 / (cfg.test_points - 1) as f64
            }
        })
        .collect();
    let test_y: Vec<f64> = test_x.iter().map(|&x| cfg.truth.eval(x)).collect();

    let mut errors = vec![Vec::with_capacity(cfg.trials); cfg.alphas.len()];
    let mut teacher_errors = Vec::with_capacity(cfg.trials);
    for trial in 0..cfg.trials {
        let trial_seed = derive_seed(cfg.rng_seed, &format!("trial-{trial}"));
        let mut r = rng::seeded(trial_seed);
        let xs: Vec<f64> = (0..cfg.n).map(|_| r.random_range(-1.0..1.0)).collect();
        let mut ys: Vec<f64> = xs.iter().map(|&x| cfg.truth.eval(x)).collect();
        let corrupted = rand::seq::index::sample(&mut r, cfg.n, cfg.m);
        for i in corrupted.iter() {
            ys[i] = r.random_range(-cfg.wrong_label_range..=cfg.wrong_label_range);
        }

        let teacher = fit_regressor(
            &xs,
            &ys,
            cfg.hidden,
            cfg.steps,
            cfg.learning_rate,
            derive_seed(trial_seed, "teacher"),
        );
        teacher_errors.push(mse_against(&teacher, &test_x, &test_y));
        let teacher_scores = teacher.score_matrix(&xs, xs.len()).expect("1-d inputs");
        let student_seed = derive_seed(trial_seed, "student");
        for (ai, &alpha) in cfg.alphas.iter().enumerate() {
            let labels = student_labels(&ys, &teacher_scores, alpha)?;
            let student = fit_regressor(&xs, &labels, cfg.hidden, cfg.steps, cfg.learning_rate, student_seed);
            errors[ai].push(mse_against(&student, &test_x, &test_y));
        }
    }

    let rows: Vec<AlphaRow> = cfg
        .alphas
        .iter()
        .zip(&errors)
        .map(|(&alpha, e)| {
            let (mean_test_error, std) = mean_std(e);
            AlphaRow {
                alpha,
                mean_test_error,
                std,
            }
        })
        .collect();
    let best_alpha = rows
        .iter()
        .min_by(|a, b| a.mean_test_error.total_cmp(&b.mean_test_error))
        .map(|r| r.alpha)
        .expect("non-empty grid");
    Ok(NoisySweepReport {
        rows,
        teacher_mean_test_error: mean_std(&teacher_errors).0,
        best_alpha,
        alpha_star: alpha_star(cfg.n, cfg.m)?,
    })
}
