//! Fully connected network with rectifier hidden units and a logistic output.
//!
//! Inputs are standardized with per-component statistics stored in the model.
//! Loss is mean binary cross-entropy (computed from the logit) plus an L2
//! penalty on weights, not biases.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::PatchSpec;
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "vmlp";
pub const STD_FLOOR: f64 = 1e-8;

/// Row-major `outputs × inputs` weight matrix plus bias.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    #[inline]
    pub fn row(&self, o: usize) -> &[f64] {
        &self.weights[o * self.inputs..(o + 1) * self.inputs]
    }

    fn apply(&self, input: &[f64], out: &mut [f64]) {
        for (o, slot) in out.iter_mut().enumerate() {
            *slot = dot(self.row(o), input) + self.bias[o];
        }
    }
}

/// Four-lane dot product; fixed summation order keeps results reproducible.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of `logistic(z)` against label `y`, stable for large |z|.
pub fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - y * z + (-z.abs()).exp().ln_1p()
}

/// Largest f64 below 1; keeps reported probabilities in the open interval.
const ONE_BELOW: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<DenseLayer>,
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
}

/// Per-thread buffers for the forward pass.
#[derive(Debug, Clone)]
pub struct Scratch {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl MlpModel {
    /// All-zero weights and biases with identity standardization.
    pub fn zeros(layer_sizes: &[usize]) -> Self {
        assert!(layer_sizes.len() >= 2, "need at least input and output sizes");
        let layers = layer_sizes.windows(2).map(|w| DenseLayer::zeros(w[0], w[1])).collect();
        Self {
            layers,
            feature_mean: vec![0.0; layer_sizes[0]],
            feature_std: vec![1.0; layer_sizes[0]],
        }
    }

    /// He-normal weights, zero biases, identity standardization.
    pub fn random(layer_sizes: &[usize], rng: &mut impl Rng) -> Self {
        let mut model = Self::zeros(layer_sizes);
        for layer in &mut model.layers {
            let normal = Normal::new(0.0, (2.0 / layer.inputs as f64).sqrt()).expect("valid std");
            for w in &mut layer.weights {
                *w = normal.sample(rng);
            }
        }
        model
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(|l| l.outputs));
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::invalid("model has no layers"));
        }
        for (i, w) in self.layers.windows(2).enumerate() {
            if w[0].outputs != w[1].inputs {
                return Err(Error::invalid(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    w[0].outputs,
                    i + 1,
                    w[1].inputs
                )));
            }
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::invalid(format!("layer {i} has inconsistent shapes")));
            }
        }
        if self.layers.last().map(|l| l.outputs) != Some(1) {
            return Err(Error::invalid("output layer must have exactly one unit"));
        }
        let d = self.input_dim();
        if self.feature_mean.len() != d || self.feature_std.len() != d {
            return Err(Error::invalid("standardization statistics do not match input size"));
        }
        if self.feature_std.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("feature_std must be strictly positive"));
        }
        Ok(())
    }

    pub fn scratch(&self) -> Scratch {
        let width = self.layer_sizes().into_iter().max().unwrap_or(1);
        Scratch {
            a: vec![0.0; width],
            b: vec![0.0; width],
        }
    }

    fn logit_from_standardized(&self, scratch: &mut Scratch) -> f64 {
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let (src, dst) = (&scratch.a[..layer.inputs], &mut scratch.b[..layer.outputs]);
            layer.apply(src, dst);
            if i < last {
                for v in dst.iter_mut() {
                    *v = v.max(0.0);
                }
            }
            std::mem::swap(&mut scratch.a, &mut scratch.b);
        }
        scratch.a[0]
    }

    fn standardize_into<T: Copy + Into<f64>>(&self, features: &[T], out: &mut [f64]) {
        for (((o, &f), m), s) in out
            .iter_mut()
            .zip(features)
            .zip(&self.feature_mean)
            .zip(&self.feature_std)
        {
            *o = (f.into() - m) / s;
        }
    }

    fn probability(z: f64) -> f64 {
        logistic(z).clamp(f64::MIN_POSITIVE, ONE_BELOW)
    }

    /// Probability in (0, 1) for one raw (unstandardized) feature vector.
    pub fn forward(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: features.len(),
            });
        }
        let mut scratch = self.scratch();
        self.standardize_into(features, &mut scratch.a[..features.len()]);
        Ok(Self::probability(self.logit_from_standardized(&mut scratch)))
    }

    /// Same as [`forward`](Self::forward) for `f32` features with caller-owned
    /// buffers; panics on a length mismatch.
    pub fn forward_f32(&self, features: &[f32], scratch: &mut Scratch) -> f64 {
        assert_eq!(features.len(), self.input_dim());
        self.standardize_into(features, &mut scratch.a[..features.len()]);
        Self::probability(self.logit_from_standardized(scratch))
    }

    pub fn standardize(&self, features: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; features.len()];
        self.standardize_into(features, &mut out);
        out
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.layers.iter().flat_map(|l| l.weights.iter()).map(|w| w * w).sum()
    }

    /// Mean cross-entropy + `l2 · Σ‖W‖²` over a batch of standardized inputs,
    /// with the gradient of that objective.
    pub fn loss_and_gradient(&self, batch: &FeatureMatrix, labels: &[f64], l2: f64) -> (f64, Gradients) {
        let mut grads = Gradients::zeros_like(self);
        let mut ws = BackpropWorkspace::new(self);
        let mut loss = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            loss += self.accumulate_sample(batch.row(i), y, &mut grads, &mut ws);
        }
        let n = labels.len().max(1) as f64;
        grads.scale(1.0 / n);
        for (g, layer) in grads.layers.iter_mut().zip(&self.layers) {
            axpy(2.0 * l2, &layer.weights, &mut g.weights);
        }
        (loss / n + l2 * self.l2_norm_sq(), grads)
    }

    /// Objective value only, for finite-difference checks and reporting.
    pub fn loss(&self, batch: &FeatureMatrix, labels: &[f64], l2: f64) -> f64 {
        let mut scratch = self.scratch();
        let mut loss = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let x = batch.row(i);
            scratch.a[..x.len()].copy_from_slice(x);
            loss += bce_with_logit(self.logit_from_standardized(&mut scratch), y);
        }
        loss / labels.len().max(1) as f64 + l2 * self.l2_norm_sq()
    }

    /// Adds the unscaled per-sample gradient into `grads`; returns the sample loss.
    fn accumulate_sample(&self, x: &[f64], y: f64, grads: &mut Gradients, ws: &mut BackpropWorkspace) -> f64 {
        let last = self.layers.len() - 1;
        ws.acts[0].copy_from_slice(x);
        for (l, layer) in self.layers.iter().enumerate() {
            let (head, tail) = ws.acts.split_at_mut(l + 1);
            let out = &mut tail[0];
            layer.apply(&head[l], out);
            if l < last {
                for v in out.iter_mut() {
                    *v = v.max(0.0);
                }
            }
        }
        let z = ws.acts[last + 1][0];
        let loss = bce_with_logit(z, y);

        ws.delta[last].clear();
        ws.delta[last].push(logistic(z) - y);
        for l in (0..=last).rev() {
            let layer = &self.layers[l];
            let g = &mut grads.layers[l];
            for (o, &d) in ws.delta[l].iter().enumerate() {
                if d != 0.0 {
                    axpy(d, &ws.acts[l], &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs]);
                    g.bias[o] += d;
                }
            }
            if l > 0 {
                let (lower, upper) = ws.delta.split_at_mut(l);
                let prev = &mut lower[l - 1];
                prev.clear();
                prev.resize(layer.inputs, 0.0);
                for (o, &d) in upper[0].iter().enumerate() {
                    if d != 0.0 {
                        axpy(d, layer.row(o), prev);
                    }
                }
                // rectifier derivative, taken as 0 at exactly 0
                for (p, &a) in prev.iter_mut().zip(&ws.acts[l]) {
                    if a <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
        }
        loss
    }

    /// `W -= lr · G` for every parameter.
    pub fn apply_gradient(&mut self, grads: &Gradients, learning_rate: f64) {
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            axpy(-learning_rate, &g.weights, &mut layer.weights);
            axpy(-learning_rate, &g.bias, &mut layer.bias);
        }
    }
}

struct BackpropWorkspace {
    acts: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
}

impl BackpropWorkspace {
    fn new(model: &MlpModel) -> Self {
        let sizes = model.layer_sizes();
        Self {
            acts: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            delta: sizes[1..].iter().map(|&n| Vec::with_capacity(n)).collect(),
        }
    }
}

/// Same shapes as the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<DenseLayer>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| DenseLayer::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    pub fn reset(&mut self) {
        for l in &mut self.layers {
            l.weights.fill(0.0);
            l.bias.fill(0.0);
        }
    }

    fn scale(&mut self, k: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|v| *v *= k);
        }
    }

    /// Flattened parameters in layer order: weights then bias.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }
}

/// Row-major `rows × dim` matrix of feature vectors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMatrix {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(dim: usize) -> Self {
        Self { dim, data: Vec::new() }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut m = Self::new(dim);
        for r in rows {
            m.push(r.as_ref());
        }
        m
    }

    pub fn push(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.dim);
        self.data.extend_from_slice(row);
    }

    pub fn rows(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Per-column mean and population std (floored at [`STD_FLOOR`]).
    pub fn column_stats(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.rows() as f64;
        let mut mean = vec![0.0; self.dim];
        for i in 0..self.rows() {
            axpy(1.0, self.row(i), &mut mean);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; self.dim];
        for i in 0..self.rows() {
            for ((v, &x), &m) in var.iter_mut().zip(self.row(i)).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var.into_iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect();
        (mean, std)
    }
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    patch_spec: PatchSpec,
    layer_sizes: Vec<usize>,
    feature_mean: Vec<f64>,
    feature_std: Vec<f64>,
    layers: Vec<LayerFile>,
}

pub fn save_model(model: &MlpModel, spec: &PatchSpec, path: &Path) -> Result<()> {
    model.validate()?;
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: crate::io::FORMAT_VERSION,
        patch_spec: spec.clone(),
        layer_sizes: model.layer_sizes(),
        feature_mean: model.feature_mean.clone(),
        feature_std: model.feature_std.clone(),
        layers: model
            .layers
            .iter()
            .map(|l| LayerFile {
                w: l.weights.chunks(l.inputs).map(<[f64]>::to_vec).collect(),
                b: l.bias.clone(),
            })
            .collect(),
    };
    crate::io::write_json(path, &file)
}

pub fn load_model(path: &Path) -> Result<(MlpModel, PatchSpec)> {
    let value: serde_json::Value = crate::io::read_json(path)?;
    if value.get("format").and_then(|v| v.as_str()) != Some(MODEL_FORMAT)
        || value.get("version").and_then(|v| v.as_u64()) != Some(crate::io::FORMAT_VERSION as u64)
    {
        return Err(Error::Unsupported {
            what: "model format/version",
            found: format!(
                "{} in {}",
                value.get("version").unwrap_or(&serde_json::Value::Null),
                path.display()
            ),
        });
    }
    let file: ModelFile = serde_json::from_value(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    file.patch_spec.validate()?;
    if file.layer_sizes.len() != file.layers.len() + 1 {
        return Err(Error::invalid("layer_sizes does not match the number of layers"));
    }
    let mut layers = Vec::with_capacity(file.layers.len());
    for (i, lf) in file.layers.into_iter().enumerate() {
        let (inputs, outputs) = (file.layer_sizes[i], file.layer_sizes[i + 1]);
        if lf.w.len() != outputs || lf.w.iter().any(|r| r.len() != inputs) {
            return Err(Error::invalid(format!(
                "layer {i} weight matrix is not {outputs}x{inputs}"
            )));
        }
        layers.push(DenseLayer {
            inputs,
            outputs,
            weights: lf.w.into_iter().flatten().collect(),
            bias: lf.b,
        });
    }
    let model = MlpModel {
        layers,
        feature_mean: file.feature_mean,
        feature_std: file.feature_std,
    };
    model.validate()?;
    if model.input_dim() != file.patch_spec.feature_dim() {
        return Err(Error::DimensionMismatch {
            expected: file.patch_spec.feature_dim(),
            got: model.input_dim(),
        });
    }
    Ok((model, file.patch_spec))
}
