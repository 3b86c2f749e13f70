//! Multilayer perceptron with softmax cross-entropy and analytic backprop.
//!
//! Each layer computes `z = a · W + b` with `W` stored as `[fan_in x fan_out]`.
//! `W` is the layer's multiplicative weight tensor; `b` is additive and is
//! kept out of every rotation computation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{gemm, glorot_uniform_init, Dense, SeededRng, TensorError, Trans};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("model needs at least 2 layer widths, got {0:?}")]
    TooFewWidths(Vec<usize>),
    #[error("layer widths must be positive, got {0:?}")]
    ZeroWidth(Vec<usize>),
    #[error("input has {actual} features, model expects {expected}")]
    InputWidth { expected: usize, actual: usize },
    #[error("{labels} labels for {rows} input rows")]
    LabelCount { rows: usize, labels: usize },
    #[error("label {label} at row {row} is outside [0, {classes})")]
    LabelOutOfRange {
        row: usize,
        label: usize,
        classes: usize,
    },
    #[error("layer index {index} out of range for {count} layers")]
    LayerIndex { index: usize, count: usize },
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z`.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

/// Architecture of an MLP: `layer_widths = [input, hidden..., classes]`.
/// The loss is always softmax cross-entropy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub layer_widths: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
}

impl ModelSpec {
    pub fn new(layer_widths: Vec<usize>, activation: Activation) -> Self {
        Self {
            layer_widths,
            activation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(ModelError::TooFewWidths(self.layer_widths.clone()));
        }
        if self.layer_widths.contains(&0) {
            return Err(ModelError::ZeroWidth(self.layer_widths.clone()));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn classes(&self) -> usize {
        *self.layer_widths.last().unwrap_or(&0)
    }

    /// Number of weight layers, `L`.
    pub fn layer_count(&self) -> usize {
        self.layer_widths.len().saturating_sub(1)
    }
}

/// One dense layer: trainable weights and bias, plus the frozen snapshot of
/// the weights taken at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerState {
    pub weights: Dense,
    weights_init: Dense,
    pub bias: Dense,
    layer_index: usize,
    layer_count: usize,
}

impl LayerState {
    pub fn new(
        weights: Dense,
        bias: Dense,
        layer_index: usize,
        layer_count: usize,
    ) -> Result<Self> {
        let (_, fan_out) = weights.dims2("layer weights")?;
        if bias.len() != fan_out {
            return Err(TensorError::ShapeMismatch {
                op: "layer bias",
                left: weights.shape().to_vec(),
                right: bias.shape().to_vec(),
            }
            .into());
        }
        if layer_index >= layer_count {
            return Err(ModelError::LayerIndex {
                index: layer_index,
                count: layer_count,
            });
        }
        Ok(Self {
            weights_init: weights.clone(),
            weights,
            bias,
            layer_index,
            layer_count,
        })
    }

    pub fn weights_init(&self) -> &Dense {
        &self.weights_init
    }

    pub fn layer_index(&self) -> usize {
        self.layer_index
    }

    pub fn layer_count(&self) -> usize {
        self.layer_count
    }

    pub fn fan_in(&self) -> usize {
        self.weights.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.cols()
    }

    /// Human readable name used in exported curves, e.g. `dense_0`.
    pub fn name(&self) -> String {
        format!("dense_{}", self.layer_index)
    }
}

/// Per-layer gradients of the mean loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Dense,
    pub bias: Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<LayerGrad>,
}

/// Activations retained by [`Mlp::forward`] for the backward pass:
/// `inputs[l]` is the input to layer `l`, `pre[l]` its pre-activation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Dense>,
    pre: Vec<Dense>,
}

/// Current weights and initial weights of one layer, one row per output
/// neuron. Row `j` is the column of `W` feeding neuron `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSnapshot {
    pub layer_index: usize,
    pub current: Dense,
    pub initial: Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    spec: ModelSpec,
    layers: Vec<LayerState>,
}

impl Mlp {
    /// Glorot-uniform weights (drawn layer by layer in forward order) and
    /// zero biases.
    pub fn init(spec: ModelSpec, rng: &mut SeededRng) -> Result<Self> {
        spec.validate()?;
        let count = spec.layer_count();
        let mut layers = Vec::with_capacity(count);
        for (l, pair) in spec.layer_widths.windows(2).enumerate() {
            let w = glorot_uniform_init(rng, pair[0], pair[1])?;
            layers.push(LayerState::new(w, Dense::zeros(vec![pair[1]]), l, count)?);
        }
        Ok(Self { spec, layers })
    }

    /// Builds a model from explicit layers; their shapes must chain.
    pub fn from_layers(spec: ModelSpec, layers: Vec<LayerState>) -> Result<Self> {
        spec.validate()?;
        if layers.len() != spec.layer_count() {
            return Err(ModelError::LayerIndex {
                index: layers.len(),
                count: spec.layer_count(),
            });
        }
        for (l, layer) in layers.iter().enumerate() {
            let want = [spec.layer_widths[l], spec.layer_widths[l + 1]];
            if layer.weights.shape() != want {
                return Err(TensorError::ShapeMismatch {
                    op: "from_layers",
                    left: want.to_vec(),
                    right: layer.weights.shape().to_vec(),
                }
                .into());
            }
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[LayerState] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerState] {
        &mut self.layers
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn forward(&self, inputs: &Dense) -> Result<(Dense, ForwardCache)> {
        let (rows, width) = inputs.dims2("forward")?;
        if width != self.spec.input_width() {
            return Err(ModelError::InputWidth {
                expected: self.spec.input_width(),
                actual: width,
            });
        }
        let act = self.spec.activation;
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
        };
        let mut current = inputs.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = Dense::zeros(vec![rows, layer.fan_out()]);
            add_bias_rows(&mut z, &layer.bias);
            gemm(
                1.0,
                &current,
                Trans::No,
                &layer.weights,
                Trans::No,
                1.0,
                &mut z,
            )?;
            let last = l + 1 == self.layers.len();
            let next = if last {
                z.clone()
            } else {
                let mut a = z.clone();
                a.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
                a
            };
            cache.inputs.push(current);
            cache.pre.push(z);
            current = next;
        }
        Ok((current, cache))
    }

    /// Logits only, evaluated in row chunks to bound memory.
    pub fn predict(&self, inputs: &Dense) -> Result<Dense> {
        let (rows, width) = inputs.dims2("predict")?;
        if width != self.spec.input_width() {
            return Err(ModelError::InputWidth {
                expected: self.spec.input_width(),
                actual: width,
            });
        }
        const CHUNK: usize = 1000;
        let classes = self.spec.classes();
        let mut out = Vec::with_capacity(rows * classes);
        let act = self.spec.activation;
        for start in (0..rows).step_by(CHUNK) {
            let end = (start + CHUNK).min(rows);
            let mut current = Dense::matrix(
                end - start,
                width,
                inputs.as_slice()[start * width..end * width].to_vec(),
            )?;
            for (l, layer) in self.layers.iter().enumerate() {
                let mut z = Dense::zeros(vec![end - start, layer.fan_out()]);
                add_bias_rows(&mut z, &layer.bias);
                gemm(
                    1.0,
                    &current,
                    Trans::No,
                    &layer.weights,
                    Trans::No,
                    1.0,
                    &mut z,
                )?;
                if l + 1 < self.layers.len() {
                    z.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
                }
                current = z;
            }
            out.extend_from_slice(current.as_slice());
        }
        Ok(Dense::matrix(rows, classes, out)?)
    }

    /// Mean softmax cross-entropy over the batch and its exact gradient.
    pub fn loss_and_grad(&self, inputs: &Dense, labels: &[usize]) -> Result<(f64, GradientSet)> {
        let (logits, cache) = self.forward(inputs)?;
        let (rows, classes) = logits.dims2("loss")?;
        check_labels(rows, classes, labels)?;

        let mut delta = Dense::zeros(vec![rows, classes]);
        let mut loss = 0.0;
        let inv_rows = 1.0 / rows as f64;
        for (r, &label) in labels.iter().enumerate() {
            let z = logits.row(r);
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum_exp: f64 = z.iter().map(|v| (v - max).exp()).sum();
            let log_norm = max + sum_exp.ln();
            loss += log_norm - z[label];
            let d = &mut delta.as_mut_slice()[r * classes..(r + 1) * classes];
            for (c, dc) in d.iter_mut().enumerate() {
                let p = (z[c] - log_norm).exp();
                *dc = (p - if c == label { 1.0 } else { 0.0 }) * inv_rows;
            }
        }
        loss *= inv_rows;

        let act = self.spec.activation;
        let mut grads: Vec<LayerGrad> = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let mut gw = Dense::zeros(layer.weights.shape().to_vec());
            gemm(
                1.0,
                &cache.inputs[l],
                Trans::Yes,
                &delta,
                Trans::No,
                0.0,
                &mut gw,
            )?;
            let mut gb = vec![0.0; layer.fan_out()];
            for r in 0..rows {
                for (g, d) in gb.iter_mut().zip(delta.row(r)) {
                    *g += d;
                }
            }
            grads.push(LayerGrad {
                weights: gw,
                bias: Dense::vector(gb),
            });
            if l > 0 {
                let mut upstream = Dense::zeros(vec![rows, layer.fan_in()]);
                gemm(
                    1.0,
                    &delta,
                    Trans::No,
                    &layer.weights,
                    Trans::Yes,
                    0.0,
                    &mut upstream,
                )?;
                for (u, z) in upstream
                    .as_mut_slice()
                    .iter_mut()
                    .zip(cache.pre[l - 1].as_slice())
                {
                    *u *= act.derivative(*z);
                }
                delta = upstream;
            }
        }
        grads.reverse();
        Ok((loss, GradientSet { layers: grads }))
    }

    /// Mean loss without gradients.
    pub fn loss(&self, inputs: &Dense, labels: &[usize]) -> Result<f64> {
        let logits = self.predict(inputs)?;
        let (rows, classes) = logits.dims2("loss")?;
        check_labels(rows, classes, labels)?;
        let total: f64 = labels
            .iter()
            .enumerate()
            .map(|(r, &label)| {
                let z = logits.row(r);
                let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let sum_exp: f64 = z.iter().map(|v| (v - max).exp()).sum();
                max + sum_exp.ln() - z[label]
            })
            .sum();
        Ok(total / rows as f64)
    }

    /// Fraction of rows whose argmax logit equals the label. Ties go to the
    /// lowest class index. An empty input has accuracy 0.
    pub fn accuracy(&self, inputs: &Dense, labels: &[usize]) -> Result<f64> {
        let logits = self.predict(inputs)?;
        let (rows, _) = logits.dims2("accuracy")?;
        if labels.len() != rows {
            return Err(ModelError::LabelCount {
                rows,
                labels: labels.len(),
            });
        }
        if rows == 0 {
            return Ok(0.0);
        }
        let hits = (0..rows)
            .filter(|&r| argmax(logits.row(r)) == labels[r])
            .count();
        Ok(hits as f64 / rows as f64)
    }

    pub fn snapshot_features(&self, layer_index: usize) -> Result<FeatureSnapshot> {
        let layer = self.layers.get(layer_index).ok_or(ModelError::LayerIndex {
            index: layer_index,
            count: self.layers.len(),
        })?;
        Ok(FeatureSnapshot {
            layer_index,
            current: layer.weights.transpose()?,
            initial: layer.weights_init.transpose()?,
        })
    }
}

fn add_bias_rows(z: &mut Dense, bias: &Dense) {
    let cols = bias.len();
    for row in z.as_mut_slice().chunks_mut(cols) {
        row.copy_from_slice(bias.as_slice());
    }
}

fn check_labels(rows: usize, classes: usize, labels: &[usize]) -> Result<()> {
    if labels.len() != rows {
        return Err(ModelError::LabelCount {
            rows,
            labels: labels.len(),
        });
    }
    if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &y)| y >= classes) {
        return Err(ModelError::LabelOutOfRange {
            row,
            label,
            classes,
        });
    }
    Ok(())
}

/// Index of the largest value; the first one wins on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
