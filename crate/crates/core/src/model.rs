//! Feed-forward scoring network `f(x; θ)`.
//!
//! Hidden layers use ReLU, the output layer is a single linear unit. All
//! parameters live in one flat vector so optimizers and gradient checks can
//! treat the model as a point in `R^P`. Per layer the layout is the weight
//! matrix (`outputs × inputs`, row-major) followed by the bias vector.

use std::fmt::Write as _;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::data::QueryList;
use crate::rng::{self, Rng};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("InvalidDims: {0}")]
    InvalidDims(String),
    #[error("ShapeMismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("CorruptModelFile: {0}")]
    CorruptModelFile(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Layer {
    inputs: usize,
    outputs: usize,
    offset: usize,
}

impl Layer {
    fn weight_range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.inputs * self.outputs
    }

    fn bias_range(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.inputs * self.outputs;
        start..start + self.outputs
    }
}

fn layout(dims: &[usize]) -> (Vec<Layer>, usize) {
    let mut offset = 0;
    let layers = dims
        .windows(2)
        .map(|w| {
            let l = Layer {
                inputs: w[0],
                outputs: w[1],
                offset,
            };
            offset += w[0] * w[1] + w[1];
            l
        })
        .collect();
    (layers, offset)
}

fn check_dims(dims: &[usize]) -> Result<(), ModelError> {
    if dims.len() < 2 {
        return Err(ModelError::InvalidDims(format!(
            "need at least input and output dims, got {dims:?}"
        )));
    }
    if dims.contains(&0) {
        return Err(ModelError::InvalidDims(format!("zero-width layer in {dims:?}")));
    }
    if *dims.last().unwrap() != 1 {
        return Err(ModelError::InvalidDims(format!(
            "output dimension must be 1, got {dims:?}"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoringModel {
    dims: Vec<usize>,
    layers: Vec<Layer>,
    params: Vec<f64>,
    dropout_rate: f64,
}

/// Activations recorded by a forward pass, consumed by [`ScoringModel::backward`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    n: usize,
    /// `post[0]` is the input batch; `post[l]` is the output of layer `l - 1`
    /// after ReLU and dropout.
    post: Vec<Vec<f64>>,
    /// Pre-activations of every layer.
    pre: Vec<Vec<f64>>,
    /// Per hidden layer keep-mask, present only when dropout was active.
    masks: Vec<Option<Vec<bool>>>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.n
    }

    pub fn pre_activations(&self, layer: usize) -> &[f64] {
        &self.pre[layer]
    }

    pub fn dropout_mask(&self, layer: usize) -> Option<&[bool]> {
        self.masks.get(layer).and_then(|m| m.as_deref())
    }
}

/// Gradient with the same flat layout as the model parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads {
    layers: Vec<Layer>,
    values: Vec<f64>,
}

impl ParamGrads {
    pub fn zeros_like(model: &ScoringModel) -> Self {
        Self {
            layers: model.layers.clone(),
            values: vec![0.0; model.params.len()],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn weight(&self, layer: usize) -> &[f64] {
        &self.values[self.layers[layer].weight_range()]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        &self.values[self.layers[layer].bias_range()]
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|g| *g *= factor);
    }

    pub fn fill_zero(&mut self) {
        self.values.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|g| g.is_finite())
    }
}

impl ScoringModel {
    /// He-initialized weights (`N(0, 2 / fan_in)`), zero biases.
    pub fn init(dims: &[usize], seed: u64) -> Result<Self, ModelError> {
        check_dims(dims)?;
        let (layers, count) = layout(dims);
        let mut params = vec![0.0; count];
        let mut r = rng::seeded(seed);
        for l in &layers {
            let std = (2.0 / l.inputs as f64).sqrt();
            for w in &mut params[l.weight_range()] {
                let z: f64 = StandardNormal.sample(&mut r);
                *w = std * z;
            }
        }
        Ok(Self {
            dims: dims.to_vec(),
            layers,
            params,
            dropout_rate: 0.0,
        })
    }

    /// Model from explicit per-layer `(weights, biases)`.
    pub fn from_layers(dims: &[usize], tensors: &[(Vec<f64>, Vec<f64>)]) -> Result<Self, ModelError> {
        check_dims(dims)?;
        let (layers, count) = layout(dims);
        if tensors.len() != layers.len() {
            return Err(ModelError::ShapeMismatch {
                expected: layers.len(),
                got: tensors.len(),
            });
        }
        let mut params = Vec::with_capacity(count);
        for (l, (w, b)) in layers.iter().zip(tensors) {
            if w.len() != l.inputs * l.outputs {
                return Err(ModelError::ShapeMismatch {
                    expected: l.inputs * l.outputs,
                    got: w.len(),
                });
            }
            if b.len() != l.outputs {
                return Err(ModelError::ShapeMismatch {
                    expected: l.outputs,
                    got: b.len(),
                });
            }
            params.extend_from_slice(w);
            params.extend_from_slice(b);
        }
        Ok(Self {
            dims: dims.to_vec(),
            layers,
            params,
            dropout_rate: 0.0,
        })
    }

    pub fn with_dropout(mut self, rate: f64) -> Result<Self, ModelError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(ModelError::InvalidDims(format!(
                "dropout rate must lie in [0, 1), got {rate}"
            )));
        }
        self.dropout_rate = rate;
        Ok(self)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn weight(&self, layer: usize) -> &[f64] {
        &self.params[self.layers[layer].weight_range()]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        &self.params[self.layers[layer].bias_range()]
    }

    fn check_input(&self, features: &[f64], n: usize) -> Result<(), ModelError> {
        if features.len() != n * self.dims[0] {
            return Err(ModelError::ShapeMismatch {
                expected: n * self.dims[0],
                got: features.len(),
            });
        }
        Ok(())
    }

    fn affine(&self, l: &Layer, input: &[f64], n: usize) -> Vec<f64> {
        let w = &self.params[l.weight_range()];
        let b = &self.params[l.bias_range()];
        let mut out = Vec::with_capacity(n * l.outputs);
        for row in input.chunks_exact(l.inputs) {
            for (o, bias) in b.iter().enumerate() {
                let wr = &w[o * l.inputs..(o + 1) * l.inputs];
                out.push(bias + dot(wr, row));
            }
        }
        out
    }

    /// Inference scores for a row-major `n × k` feature matrix.
    pub fn score_matrix(&self, features: &[f64], n: usize) -> Result<Vec<f64>, ModelError> {
        self.check_input(features, n)?;
        let last = self.layers.len() - 1;
        let mut act = features.to_vec();
        for (li, l) in self.layers.iter().enumerate() {
            act = self.affine(l, &act, n);
            if li != last {
                act.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        Ok(act)
    }

    /// Inference scores (no dropout, no cache).
    pub fn score(&self, ql: &QueryList) -> Result<Vec<f64>, ModelError> {
        if ql.feature_count() != self.dims[0] {
            return Err(ModelError::ShapeMismatch {
                expected: self.dims[0],
                got: ql.feature_count(),
            });
        }
        self.score_matrix(ql.features(), ql.len())
    }

    /// Forward pass recording activations. Dropout (inverted scaling) applies
    /// to hidden activations only when `training` is set.
    pub fn forward(
        &self,
        ql: &QueryList,
        training: bool,
        rng: &mut Rng,
    ) -> Result<(Vec<f64>, ForwardCache), ModelError> {
        if ql.feature_count() != self.dims[0] {
            return Err(ModelError::ShapeMismatch {
                expected: self.dims[0],
                got: ql.feature_count(),
            });
        }
        self.forward_matrix(ql.features(), ql.len(), training, rng)
    }

    pub fn forward_matrix(
        &self,
        features: &[f64],
        n: usize,
        training: bool,
        rng: &mut Rng,
    ) -> Result<(Vec<f64>, ForwardCache), ModelError> {
        self.check_input(features, n)?;
        let last = self.layers.len() - 1;
        let dropout = training && self.dropout_rate > 0.0;
        let keep_scale = 1.0 / (1.0 - self.dropout_rate);
        let mut post = vec![features.to_vec()];
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut masks = Vec::with_capacity(last);
        for (li, l) in self.layers.iter().enumerate() {
            let z = self.affine(l, post.last().unwrap(), n);
            if li == last {
                post.push(z.clone());
            } else {
                let mut a: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
                if dropout {
                    let mask: Vec<bool> = (0..a.len())
                        .map(|_| rng.random::<f64>() >= self.dropout_rate)
                        .collect();
                    for (v, &keep) in a.iter_mut().zip(&mask) {
                        *v = if keep { *v * keep_scale } else { 0.0 };
                    }
                    masks.push(Some(mask));
                } else {
                    masks.push(None);
                }
                post.push(a);
            }
            pre.push(z);
        }
        let scores = post.last().unwrap().clone();
        Ok((scores, ForwardCache { n, post, pre, masks }))
    }

    /// Gradient of `Σ_i dl_ds[i] · score_i` with respect to every parameter.
    pub fn backward(&self, cache: &ForwardCache, dl_ds: &[f64]) -> Result<ParamGrads, ModelError> {
        let mut grads = ParamGrads::zeros_like(self);
        self.backward_into(cache, dl_ds, 1.0, &mut grads)?;
        Ok(grads)
    }

    /// Accumulates `scale ·` the gradient into `grads`.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        dl_ds: &[f64],
        scale: f64,
        grads: &mut ParamGrads,
    ) -> Result<(), ModelError> {
        let n = cache.n;
        if dl_ds.len() != n {
            return Err(ModelError::ShapeMismatch {
                expected: n,
                got: dl_ds.len(),
            });
        }
        if grads.values.len() != self.params.len() || cache.post.len() != self.layers.len() + 1 {
            return Err(ModelError::ShapeMismatch {
                expected: self.params.len(),
                got: grads.values.len(),
            });
        }
        let keep_scale = 1.0 / (1.0 - self.dropout_rate);
        let mut delta: Vec<f64> = dl_ds.iter().map(|g| g * scale).collect();
        for li in (0..self.layers.len()).rev() {
            let l = self.layers[li];
            let input = &cache.post[li];
            let w = &self.params[l.weight_range()];
            {
                let (gw, gb) = grads.values[l.offset..l.bias_range().end].split_at_mut(l.inputs * l.outputs);
                for (i, d_row) in delta.chunks_exact(l.outputs).enumerate() {
                    let x = &input[i * l.inputs..(i + 1) * l.inputs];
                    for (o, &d) in d_row.iter().enumerate() {
                        if d == 0.0 {
                            continue;
                        }
                        gb[o] += d;
                        axpy(d, x, &mut gw[o * l.inputs..(o + 1) * l.inputs]);
                    }
                }
            }
            if li == 0 {
                break;
            }
            // Propagate to the previous layer's post-activation, then through
            // dropout and ReLU (subgradient 0 at 0).
            let mut prev = vec![0.0; n * l.inputs];
            for (i, d_row) in delta.chunks_exact(l.outputs).enumerate() {
                let p = &mut prev[i * l.inputs..(i + 1) * l.inputs];
                for (o, &d) in d_row.iter().enumerate() {
                    if d != 0.0 {
                        axpy(d, &w[o * l.inputs..(o + 1) * l.inputs], p);
                    }
                }
            }
            let z = &cache.pre[li - 1];
            match &cache.masks[li - 1] {
                Some(mask) => {
                    for ((p, &zv), &keep) in prev.iter_mut().zip(z).zip(mask) {
                        *p = if keep && zv > 0.0 { *p * keep_scale } else { 0.0 };
                    }
                }
                None => {
                    for (p, &zv) in prev.iter_mut().zip(z) {
                        if zv <= 0.0 {
                            *p = 0.0;
                        }
                    }
                }
            }
            delta = prev;
        }
        Ok(())
    }

    /// Text form: a `dims:` header followed by one line per tensor
    /// (weights then bias for each layer), using shortest round-trip decimals.
    pub fn serialize(&self) -> String {
        let mut out = String::from("dims:");
        for d in &self.dims {
            write!(out, " {d}").unwrap();
        }
        out.push('\n');
        for l in &self.layers {
            for range in [l.weight_range(), l.bias_range()] {
                let line: Vec<String> = self.params[range].iter().map(|v| format!("{v:?}")).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
        }
        out
    }

    pub fn deserialize(text: &str) -> Result<Self, ModelError> {
        let corrupt = |m: String| ModelError::CorruptModelFile(m);
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| corrupt("empty model file".into()))?;
        let dims_text = header
            .strip_prefix("dims:")
            .ok_or_else(|| corrupt(format!("missing dims header, got {header:?}")))?;
        let dims: Vec<usize> = dims_text
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| corrupt(format!("bad dimension {t:?}"))))
            .collect::<Result<_, _>>()?;
        check_dims(&dims).map_err(|e| corrupt(e.to_string()))?;
        let (layers, _) = layout(&dims);
        let mut tensors = Vec::with_capacity(layers.len());
        for (li, l) in layers.iter().enumerate() {
            let mut read = |what: &str, expected: usize| -> Result<Vec<f64>, ModelError> {
                let line = lines
                    .next()
                    .ok_or_else(|| corrupt(format!("truncated before layer {li} {what}")))?;
                let vals: Vec<f64> = line
                    .split_whitespace()
                    .map(|t| t.parse().map_err(|_| corrupt(format!("bad number {t:?}"))))
                    .collect::<Result<_, _>>()?;
                if vals.len() != expected {
                    return Err(corrupt(format!(
                        "layer {li} {what}: expected {expected} values, got {}",
                        vals.len()
                    )));
                }
                Ok(vals)
            };
            let w = read("weights", l.inputs * l.outputs)?;
            let b = read("bias", l.outputs)?;
            tensors.push((w, b));
        }
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(corrupt("trailing data after last tensor".into()));
        }
        Self::from_layers(&dims, &tensors).map_err(|e| corrupt(e.to_string()))
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
