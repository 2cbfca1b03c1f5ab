//! Softmax classifiers with manual backpropagation.
//!
//! A [`ModelArch`] of length 2 is multinomial logistic regression; longer
//! architectures are MLPs with ReLU hidden layers. Parameters live in one
//! flat vector: for each layer, the `n_in × n_out` weight matrix (row-major,
//! input-major) followed by the `n_out` biases.

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::rng_from;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelArch {
    layer_sizes: Vec<usize>,
}

/// Where one layer's weights and biases sit inside the flat vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSlice {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Range<usize>,
    pub biases: Range<usize>,
}

impl ModelArch {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config(
                "architecture needs an input and an output layer".into(),
            ));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::Config(format!(
                "layer sizes must be positive: {layer_sizes:?}"
            )));
        }
        Ok(Self { layer_sizes })
    }

    pub fn logreg(inputs: usize, classes: usize) -> Result<Self> {
        Self::new(vec![inputs, classes])
    }

    pub fn mlp(inputs: usize, hidden: &[usize], classes: usize) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(inputs);
        sizes.extend_from_slice(hidden);
        sizes.push(classes);
        Self::new(sizes)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn classes(&self) -> usize {
        *self.layer_sizes.last().expect("non-empty")
    }

    pub fn hidden_layers(&self) -> &[usize] {
        &self.layer_sizes[1..self.layer_sizes.len() - 1]
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    pub fn layers(&self) -> Vec<LayerSlice> {
        let mut offset = 0;
        self.layer_sizes
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let weights = offset..offset + n_in * n_out;
                let biases = weights.end..weights.end + n_out;
                offset = biases.end;
                LayerSlice {
                    n_in,
                    n_out,
                    weights,
                    biases,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub arch: ModelArch,
    pub values: Vec<f64>,
}

impl ModelParams {
    pub fn new(arch: ModelArch, values: Vec<f64>) -> Result<Self> {
        if values.len() != arch.param_count() {
            return Err(Error::Shape(format!(
                "{} values for an architecture with {} parameters",
                values.len(),
                arch.param_count()
            )));
        }
        Ok(Self { arch, values })
    }

    pub fn zeros(arch: ModelArch) -> Self {
        let values = vec![0.0; arch.param_count()];
        Self { arch, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradVector {
    pub values: Vec<f64>,
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Borrowed mini-batch: feature rows plus labels.
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    rows: Vec<&'a [f64]>,
    labels: Vec<usize>,
}

impl<'a> Batch<'a> {
    pub fn new(rows: Vec<&'a [f64]>, labels: Vec<usize>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Shape("batch must hold at least one sample".into()));
        }
        if rows.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        Ok(Self { rows, labels })
    }

    pub fn from_indices(data: &'a Dataset, indices: &[usize]) -> Result<Self> {
        Self::new(
            indices.iter().map(|&i| data.row(i)).collect(),
            indices.iter().map(|&i| data.label(i)).collect(),
        )
    }

    pub fn whole(data: &'a Dataset) -> Self {
        Self {
            rows: (0..data.len()).map(|i| data.row(i)).collect(),
            labels: data.labels().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn rows(&self) -> &[&'a [f64]] {
        &self.rows
    }

    fn check(&self, arch: &ModelArch) -> Result<()> {
        let d = arch.input_dim();
        if let Some(r) = self.rows.iter().find(|r| r.len() != d) {
            return Err(Error::Shape(format!(
                "batch feature dimension {} but model expects {d}",
                r.len()
            )));
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l >= arch.classes()) {
            return Err(Error::Shape(format!(
                "label {l} out of range for {} classes",
                arch.classes()
            )));
        }
        Ok(())
    }
}

/// Glorot-uniform weights in `(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`,
/// zero biases.
pub fn init_model(arch: &ModelArch, seed: u64) -> ModelParams {
    let mut rng = rng_from(seed);
    let mut params = ModelParams::zeros(arch.clone());
    for layer in arch.layers() {
        let a = (6.0 / (layer.n_in + layer.n_out) as f64).sqrt();
        for w in &mut params.values[layer.weights] {
            *w = rng.random_range(-a..a);
        }
    }
    params
}

/// `out = b + input · W`, skipping zero inputs (common for image pixels).
#[inline]
fn affine(w: &[f64], b: &[f64], input: &[f64], out: &mut [f64]) {
    let n_out = b.len();
    out.copy_from_slice(b);
    for (i, &x) in input.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        let row = &w[i * n_out..(i + 1) * n_out];
        for (o, &wv) in out.iter_mut().zip(row) {
            *o += x * wv;
        }
    }
}

/// Per-layer outputs for one batch: `outputs[l]` is the post-activation of
/// layer `l + 1` (ReLU for hidden layers, raw logits for the last).
struct Trace {
    outputs: Vec<Matrix>,
}

impl Trace {
    fn logits(&self) -> &Matrix {
        self.outputs.last().expect("at least one layer")
    }
}

fn forward_trace(params: &ModelParams, batch: &Batch) -> Trace {
    let layers = params.arch.layers();
    let last = layers.len() - 1;
    let mut outputs: Vec<Matrix> = Vec::with_capacity(layers.len());
    for (l, layer) in layers.iter().enumerate() {
        let w = &params.values[layer.weights.clone()];
        let b = &params.values[layer.biases.clone()];
        let mut out = Matrix::zeros(batch.len(), layer.n_out);
        for s in 0..batch.len() {
            let input: &[f64] = if l == 0 {
                batch.rows[s]
            } else {
                outputs[l - 1].row(s)
            };
            let o = out.row_mut(s);
            affine(w, b, input, o);
            if l != last {
                for v in o.iter_mut() {
                    *v = v.max(0.0);
                }
            }
        }
        outputs.push(out);
    }
    Trace { outputs }
}

/// `ln Σ exp(z)` computed stably.
fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn batch_loss(logits: &Matrix, labels: &[usize]) -> f64 {
    let total: f64 = (0..logits.rows)
        .map(|s| {
            let z = logits.row(s);
            (log_sum_exp(z) - z[labels[s]]).max(0.0)
        })
        .sum();
    total / logits.rows as f64
}

/// Mean cross-entropy of the softmax over the batch, plus the logits.
pub fn forward_loss(params: &ModelParams, batch: &Batch) -> Result<(f64, Matrix)> {
    batch.check(&params.arch)?;
    let trace = forward_trace(params, batch);
    let loss = batch_loss(trace.logits(), &batch.labels);
    let logits = trace
        .outputs
        .into_iter()
        .last()
        .expect("at least one layer");
    Ok((loss, logits))
}

/// Representation fed to the output layer: last hidden activations for an
/// MLP, logits for logistic regression.
pub fn features(params: &ModelParams, batch: &Batch) -> Result<Matrix> {
    batch.check(&params.arch)?;
    let mut trace = forward_trace(params, batch);
    let idx = feature_layer(&params.arch);
    Ok(trace.outputs.swap_remove(idx))
}

fn feature_layer(arch: &ModelArch) -> usize {
    // outputs[i] is layer i+1; the last hidden layer is outputs[len-2]
    arch.layer_sizes().len().saturating_sub(3)
}

/// Backward pass. `feature_grad`, when present, is an extra gradient with
/// respect to the [`features`] matrix, added before the chain continues.
fn backward(
    params: &ModelParams,
    batch: &Batch,
    trace: &Trace,
    feature_grad: Option<&Matrix>,
) -> GradVector {
    let layers = params.arch.layers();
    let n = batch.len();
    let inv_n = 1.0 / n as f64;
    let mut grad = vec![0.0; params.len()];

    // dL/dlogits for the mean loss
    let mut delta = trace.logits().clone();
    for s in 0..n {
        let z = delta.row_mut(s);
        let lse = log_sum_exp(z);
        for v in z.iter_mut() {
            *v = (*v - lse).exp() * inv_n;
        }
        z[batch.labels[s]] -= inv_n;
    }
    let feat_idx = feature_layer(&params.arch);
    let hidden_count = layers.len() - 1;
    if hidden_count == 0 {
        if let Some(fg) = feature_grad {
            for (d, g) in delta.data.iter_mut().zip(&fg.data) {
                *d += g;
            }
        }
    }

    for l in (0..layers.len()).rev() {
        let layer = &layers[l];
        let n_out = layer.n_out;
        let w = &params.values[layer.weights.clone()];
        {
            let (gw, gb) =
                grad[layer.weights.start..layer.biases.end].split_at_mut(layer.n_in * n_out);
            for s in 0..n {
                let d = delta.row(s);
                let input: &[f64] = if l == 0 {
                    batch.rows[s]
                } else {
                    trace.outputs[l - 1].row(s)
                };
                for (i, &x) in input.iter().enumerate() {
                    if x == 0.0 {
                        continue;
                    }
                    for (g, &dv) in gw[i * n_out..(i + 1) * n_out].iter_mut().zip(d) {
                        *g += x * dv;
                    }
                }
                for (g, &dv) in gb.iter_mut().zip(d) {
                    *g += dv;
                }
            }
        }
        if l == 0 {
            break;
        }
        // propagate into the previous layer's post-activation, then ReLU'
        let prev = &trace.outputs[l - 1];
        let mut next = Matrix::zeros(n, layer.n_in);
        for s in 0..n {
            let d = delta.row(s);
            let a = prev.row(s);
            let out = next.row_mut(s);
            for i in 0..layer.n_in {
                if a[i] <= 0.0 {
                    continue;
                }
                let row = &w[i * n_out..(i + 1) * n_out];
                out[i] = row.iter().zip(d).map(|(wv, dv)| wv * dv).sum();
            }
        }
        if l - 1 == feat_idx {
            if let Some(fg) = feature_grad {
                for s in 0..n {
                    let a = prev.row(s);
                    for (i, (o, g)) in next.row_mut(s).iter_mut().zip(fg.row(s)).enumerate() {
                        if a[i] > 0.0 {
                            *o += g;
                        }
                    }
                }
            }
        }
        delta = next;
    }
    GradVector { values: grad }
}

pub fn gradient(params: &ModelParams, batch: &Batch) -> Result<GradVector> {
    loss_and_gradient(params, batch).map(|(_, g)| g)
}

pub fn loss_and_gradient(params: &ModelParams, batch: &Batch) -> Result<(f64, GradVector)> {
    batch.check(&params.arch)?;
    let trace = forward_trace(params, batch);
    let loss = batch_loss(trace.logits(), &batch.labels);
    Ok((loss, backward(params, batch, &trace, None)))
}

/// Loss and gradient of `cross_entropy + penalty(features)`. The penalty
/// returns its value and its gradient with respect to the feature matrix.
pub fn loss_and_gradient_with_penalty<F>(
    params: &ModelParams,
    batch: &Batch,
    penalty: F,
) -> Result<(f64, GradVector)>
where
    F: FnOnce(&Matrix) -> Result<(f64, Matrix)>,
{
    batch.check(&params.arch)?;
    let trace = forward_trace(params, batch);
    let loss = batch_loss(trace.logits(), &batch.labels);
    let feats = &trace.outputs[feature_layer(&params.arch)];
    let (extra, fg) = penalty(feats)?;
    if fg.rows != feats.rows || fg.cols != feats.cols {
        return Err(Error::Shape(
            "penalty gradient does not match the feature matrix".into(),
        ));
    }
    Ok((loss + extra, backward(params, batch, &trace, Some(&fg))))
}

/// `values - eta * grad`.
pub fn sgd_step(params: &ModelParams, grad: &GradVector, eta: f64) -> Result<ModelParams> {
    let mut next = params.clone();
    apply_sgd(&mut next, grad, eta)?;
    Ok(next)
}

pub fn apply_sgd(params: &mut ModelParams, grad: &GradVector, eta: f64) -> Result<()> {
    if grad.values.len() != params.len() {
        return Err(Error::Shape(format!(
            "gradient of length {} for {} parameters",
            grad.values.len(),
            params.len()
        )));
    }
    for (p, g) in params.values.iter_mut().zip(&grad.values) {
        *p -= eta * g;
    }
    Ok(())
}

/// Per-batch objective optimised by [`local_train_with`].
pub trait Objective: Sync {
    fn gradient(&self, params: &ModelParams, batch: &Batch) -> Result<GradVector>;
}

/// Plain softmax cross-entropy.
#[derive(Debug, Clone, Copy, Default)]
pub struct CrossEntropy;

impl Objective for CrossEntropy {
    fn gradient(&self, params: &ModelParams, batch: &Batch) -> Result<GradVector> {
        gradient(params, batch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub eta: f64,
}

impl TrainSettings {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "local epochs and batch size must be at least 1".into(),
            ));
        }
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be finite and non-negative, got {}",
                self.eta
            )));
        }
        Ok(())
    }
}

/// Mini-batch SGD over `indices` of `data`: each epoch reshuffles, then
/// walks `ceil(n / B)` batches (the last one may be short).
pub fn local_train(
    params: &ModelParams,
    data: &Dataset,
    indices: &[usize],
    settings: TrainSettings,
    seed: u64,
) -> Result<ModelParams> {
    local_train_with(&CrossEntropy, params, data, indices, settings, seed)
}

pub fn local_train_with(
    objective: &dyn Objective,
    params: &ModelParams,
    data: &Dataset,
    indices: &[usize],
    settings: TrainSettings,
    seed: u64,
) -> Result<ModelParams> {
    settings.validate()?;
    if indices.is_empty() {
        return Err(Error::EmptyClient(usize::MAX));
    }
    let mut rng = rng_from(seed);
    let mut order = indices.to_vec();
    let mut current = params.clone();
    for _ in 0..settings.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(settings.batch_size) {
            let batch = Batch::from_indices(data, chunk)?;
            let g = objective.gradient(&current, &batch)?;
            apply_sgd(&mut current, &g, settings.eta)?;
        }
    }
    if !current.is_finite() {
        return Err(Error::Numeric("local training diverged".into()));
    }
    Ok(current)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate().skip(1) {
        if v > z[best] {
            best = i;
        }
    }
    best
}

const EVAL_CHUNK: usize = 512;

/// Accuracy and mean loss over the whole dataset.
pub fn evaluate(params: &ModelParams, data: &Dataset) -> Result<Evaluation> {
    use rayon::prelude::*;
    if data.is_empty() {
        return Err(Error::Evaluation("empty evaluation set".into()));
    }
    let all: Vec<usize> = (0..data.len()).collect();
    let parts: Vec<(usize, f64)> = all
        .par_chunks(EVAL_CHUNK)
        .map(|chunk| -> Result<(usize, f64)> {
            let batch = Batch::from_indices(data, chunk)?;
            let (loss, logits) = forward_loss(params, &batch)?;
            let correct = (0..logits.rows)
                .filter(|&s| argmax(logits.row(s)) == batch.labels[s])
                .count();
            Ok((correct, loss * chunk.len() as f64))
        })
        .collect::<Result<_>>()?;
    let correct: usize = parts.iter().map(|p| p.0).sum();
    let loss: f64 = parts.iter().map(|p| p.1).sum();
    let n = data.len() as f64;
    Ok(Evaluation {
        accuracy: correct as f64 / n,
        loss: loss / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(rows: &[&[f64]], labels: &[usize], classes: usize) -> Dataset {
        let dim = rows[0].len();
        Dataset::new(rows.concat(), labels.to_vec(), dim, classes).unwrap()
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(ModelArch::logreg(784, 10).unwrap().param_count(), 7850);
        assert_eq!(
            ModelArch::mlp(784, &[200], 10).unwrap().param_count(),
            159_010
        );
        assert!(ModelArch::new(vec![3]).is_err());
        assert!(ModelArch::new(vec![3, 0, 2]).is_err());
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let arch = ModelArch::mlp(784, &[200], 10).unwrap();
        let a = init_model(&arch, 42);
        assert_eq!(a, init_model(&arch, 42));
        assert_ne!(a, init_model(&arch, 43));
        let layers = arch.layers();
        let bound = (6.0f64 / 984.0).sqrt();
        assert!(a.values[layers[0].weights.clone()]
            .iter()
            .all(|w| w.abs() < bound));
        assert!(a.values[layers[0].biases.clone()].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn zero_params_give_ln_classes() {
        let ds = toy(&[&[0.3, 0.7], &[0.1, 0.0]], &[3, 9], 10);
        let p = ModelParams::zeros(ModelArch::logreg(2, 10).unwrap());
        let (loss, _) = forward_loss(&p, &Batch::whole(&ds)).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn two_class_closed_form() {
        // bias-only logits (1, 0), true class 0 -> ln(1 + e^-1)
        let ds = toy(&[&[0.0]], &[0], 2);
        let p =
            ModelParams::new(ModelArch::logreg(1, 2).unwrap(), vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        let (loss, logits) = forward_loss(&p, &Batch::whole(&ds)).unwrap();
        assert_eq!(logits.row(0), &[1.0, 0.0]);
        assert!((loss - 0.313_261_687_518_222_8).abs() < 1e-12);
    }

    #[test]
    fn confident_logits_give_near_zero_loss() {
        let ds = toy(&[&[0.0]], &[1], 2);
        let p =
            ModelParams::new(ModelArch::logreg(1, 2).unwrap(), vec![0.0, 0.0, 0.0, 50.0]).unwrap();
        let (loss, _) = forward_loss(&p, &Batch::whole(&ds)).unwrap();
        assert!((0.0..1e-20).contains(&loss));
    }

    #[test]
    fn shape_errors() {
        let ds = toy(&[&[0.0, 1.0, 0.5]], &[0], 2);
        let p = ModelParams::zeros(ModelArch::logreg(2, 2).unwrap());
        assert!(matches!(
            forward_loss(&p, &Batch::whole(&ds)),
            Err(Error::Shape(_))
        ));
        let g = GradVector {
            values: vec![0.0; 3],
        };
        assert!(matches!(sgd_step(&p, &g, 0.1), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_param_bias_gradient_is_softmax_minus_onehot() {
        let ds = toy(&[&[0.2, 0.4], &[0.9, 0.1]], &[2, 0], 4);
        let arch = ModelArch::logreg(2, 4).unwrap();
        let g = gradient(&ModelParams::zeros(arch.clone()), &Batch::whole(&ds)).unwrap();
        let b = &g.values[arch.layers()[0].biases.clone()];
        // mean over samples of (0.25,..) - e_y
        let expect = [0.25 - 0.5, 0.25, 0.25 - 0.5, 0.25];
        for (got, want) in b.iter().zip(expect) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn duplicated_batch_has_same_gradient() {
        let ds = toy(&[&[0.2, 0.4], &[0.9, 0.1], &[0.5, 0.5]], &[0, 1, 2], 3);
        let arch = ModelArch::mlp(2, &[4], 3).unwrap();
        let p = init_model(&arch, 1);
        let once = gradient(&p, &Batch::from_indices(&ds, &[0, 1, 2]).unwrap()).unwrap();
        let twice = gradient(&p, &Batch::from_indices(&ds, &[0, 1, 2, 0, 1, 2]).unwrap()).unwrap();
        for (a, b) in once.values.iter().zip(&twice.values) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn sgd_step_arithmetic() {
        let arch = ModelArch::new(vec![1, 1]).unwrap();
        let p = ModelParams::new(arch.clone(), vec![1.0, 1.0]).unwrap();
        let g = GradVector {
            values: vec![2.0, -2.0],
        };
        assert_eq!(sgd_step(&p, &g, 0.5).unwrap().values, vec![0.0, 2.0]);
        assert_eq!(sgd_step(&p, &g, 0.0).unwrap(), p);
        let z = ModelParams::zeros(arch);
        assert_eq!(sgd_step(&z, &g, 1.0).unwrap().values, vec![-2.0, 2.0]);
    }

    #[test]
    fn local_train_full_batch_equals_one_step() {
        let ds = toy(&[&[0.2, 0.4], &[0.9, 0.1], &[0.5, 0.5]], &[0, 1, 2], 3);
        let arch = ModelArch::logreg(2, 3).unwrap();
        let p = init_model(&arch, 7);
        let settings = TrainSettings {
            epochs: 1,
            batch_size: 3,
            eta: 0.3,
        };
        let trained = local_train(&p, &ds, &[0, 1, 2], settings, 11).unwrap();
        let direct = sgd_step(&p, &gradient(&p, &Batch::whole(&ds)).unwrap(), 0.3).unwrap();
        for (a, b) in trained.values.iter().zip(&direct.values) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(
            trained,
            local_train(&p, &ds, &[0, 1, 2], settings, 11).unwrap()
        );
    }

    #[test]
    fn local_train_batch_sizes() {
        struct Recorder(std::sync::Mutex<Vec<usize>>);
        impl Objective for Recorder {
            fn gradient(&self, params: &ModelParams, batch: &Batch) -> Result<GradVector> {
                self.0.lock().unwrap().push(batch.len());
                Ok(GradVector {
                    values: vec![0.0; params.len()],
                })
            }
        }
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 / 50.0]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let ds = toy(&refs, &[0; 50], 2);
        let rec = Recorder(Default::default());
        let idx: Vec<usize> = (0..50).collect();
        let p = ModelParams::zeros(ModelArch::logreg(1, 2).unwrap());
        let s = TrainSettings {
            epochs: 1,
            batch_size: 20,
            eta: 0.1,
        };
        local_train_with(&rec, &p, &ds, &idx, s, 0).unwrap();
        assert_eq!(*rec.0.lock().unwrap(), vec![20, 20, 10]);
        assert!(matches!(
            local_train(&p, &ds, &[], s, 0),
            Err(Error::EmptyClient(_))
        ));
    }

    #[test]
    fn evaluate_tie_rule_and_hand_set_params() {
        let ds = toy(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]], &[0, 1, 1], 2);
        let zero = ModelParams::zeros(ModelArch::logreg(2, 2).unwrap());
        // every logit ties, argmax is class 0 -> 1/3 correct
        let e = evaluate(&zero, &ds).unwrap();
        assert!((e.accuracy - 1.0 / 3.0).abs() < 1e-15);
        // W = I: sample 3 has logits (1,1), tie -> class 0, wrong
        let eye = ModelParams::new(
            ModelArch::logreg(2, 2).unwrap(),
            vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        )
        .unwrap();
        assert!((evaluate(&eye, &ds).unwrap().accuracy - 2.0 / 3.0).abs() < 1e-15);
        let strong = ModelParams::new(
            ModelArch::logreg(2, 2).unwrap(),
            vec![5.0, 0.0, 0.0, 5.0, 0.0, 0.1],
        )
        .unwrap();
        assert_eq!(evaluate(&strong, &ds).unwrap().accuracy, 1.0);
    }

    #[test]
    fn argmax_lowest_index_wins() {
        assert_eq!(argmax(&[0.0, 0.0, 0.0]), 0);
        assert_eq!(argmax(&[0.0, 2.0, 2.0]), 1);
    }
}
