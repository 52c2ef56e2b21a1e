//! Central finite-difference checks for loss gradients and model backprop.
//!
//! Errors are reported as `|a − n| / max(|a|, |n|, 1)`: relative for
//! components of magnitude above one, absolute below, so near-zero gradient
//! entries do not amplify floating-point cancellation in the difference quotient.

use rand::Rng as _;

use crate::data::QueryList;
use crate::loss::LossKind;
use crate::model::ScoringModel;
use crate::rng::{self, derive_seed, Rng};

pub const FD_STEP: f64 = 1e-5;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Central difference of `f` along coordinate `i` of `x`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut p = x.to_vec();
    p[i] = x[i] + h;
    let fp = f(&p);
    p[i] = x[i] - h;
    let fm = f(&p);
    (fp - fm) / (2.0 * h)
}

/// Labels valid for `kind`: binary for the logistic loss, grades 0..=4 otherwise.
pub fn random_labels(kind: LossKind, n: usize, r: &mut Rng) -> Vec<f64> {
    let top = if kind == LossKind::PointwiseLogistic { 1 } else { 4 };
    (0..n).map(|_| f64::from(r.random_range(0..=top))).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub loss: LossKind,
    pub instances: usize,
    pub max_loss_error: f64,
    pub max_model_error: f64,
}

/// Score gradient of `kind` against finite differences of its value on
/// `instances` random lists of length 1..=20.
pub fn check_loss(kind: LossKind, instances: usize, seed: u64) -> f64 {
    let mut r = rng::seeded(derive_seed(seed, kind.name()));
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let n = r.random_range(1..=20);
        let y = random_labels(kind, n, &mut r);
        let s: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
        let g = kind.grad(&y, &s).expect("valid instance");
        for i in 0..n {
            let num = central_difference(|s| kind.value(&y, s).expect("valid instance"), &s, i, FD_STEP);
            worst = worst.max(relative_error(g[i], num));
        }
    }
    worst
}

/// Pre-activations this close to zero would let a difference step cross a ReLU kink.
const KINK_MARGIN: f64 = 1e-3;

fn near_kink(model: &ScoringModel, ql: &QueryList) -> bool {
    let mut r = rng::seeded(0);
    let (_, cache) = model.forward(ql, false, &mut r).expect("matching dims");
    (0..model.dims().len() - 2).any(|l| cache.pre_activations(l).iter().any(|z| z.abs() < KINK_MARGIN))
}

/// Parameter gradients of `kind ∘ model` through `backward` against finite
/// differences, on random two-hidden-layer models with `n ≤ 6`, `k ≤ 4`.
pub fn check_model(kind: LossKind, instances: usize, seed: u64) -> f64 {
    let mut r = rng::seeded(derive_seed(seed, &format!("model-{}", kind.name())));
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < instances {
        let k = r.random_range(1..=4);
        let n = r.random_range(1..=6);
        let dims = [k, r.random_range(1..=5), r.random_range(1..=5), 1];
        let mut model = ScoringModel::init(&dims, r.random()).expect("valid dims");
        for b in 0..dims.len() - 1 {
            // Non-zero biases so every parameter is exercised.
            let len = model.bias(b).len();
            let offset = bias_offset(&dims, b);
            for j in 0..len {
                model.params_mut()[offset + j] = r.random_range(-0.5..0.5);
            }
        }
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..k).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let ql = QueryList::from_rows("q", &rows, random_labels(kind, n, &mut r));
        if near_kink(&model, &ql) {
            continue;
        }
        done += 1;
        let mut fr = rng::seeded(0);
        let (s, cache) = model.forward(&ql, false, &mut fr).expect("matching dims");
        let dl = kind.grad(&ql.labels, &s).expect("valid instance");
        let grads = model.backward(&cache, &dl).expect("matching cache");
        let theta = model.params().to_vec();
        let objective = |p: &[f64]| {
            let mut m = model.clone();
            m.params_mut().copy_from_slice(p);
            kind.value(&ql.labels, &m.score(&ql).expect("matching dims")).expect("valid instance")
        };
        for i in 0..theta.len() {
            let num = central_difference(objective, &theta, i, FD_STEP);
            worst = worst.max(relative_error(grads.as_slice()[i], num));
        }
    }
    worst
}

fn bias_offset(dims: &[usize], layer: usize) -> usize {
    let before: usize = (0..layer).map(|l| dims[l + 1] * (dims[l] + 1)).sum();
    before + dims[layer + 1] * dims[layer]
}

pub fn run_gradcheck(kind: LossKind, instances: usize, seed: u64) -> GradCheckReport {
    GradCheckReport {
        loss: kind,
        instances,
        max_loss_error: check_loss(kind, instances, seed),
        max_model_error: check_model(kind, instances, seed),
    }
}
