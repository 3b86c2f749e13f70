//! Base step proposers.
//!
//! An optimizer turns gradients into a raw step `s` with the sign folded in,
//! so that the plain update is `w <- w + rate * s`. Layca and LARS consume the
//! same raw step and only change how it is applied.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{GradientSet, Mlp};
use crate::tensor::{Dense, TensorError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("non-finite {what} gradient in layer {layer}")]
    NonFiniteGradient { layer: usize, what: &'static str },
    #[error("invalid optimizer config: {0}")]
    Config(String),
    #[error("{0} keeps no second-moment buffer")]
    NoSecondMoment(OptimizerKind),
    #[error("optimizer state has {state} layers, model has {model}")]
    LayerCount { state: usize, model: usize },
    #[error("layer {layer} rate {rate} must be finite and >= 0")]
    BadRate { layer: usize, rate: f64 },
}

pub type Result<T> = std::result::Result<T, OptimError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    SgdAmom,
    Adam,
    Rmsprop,
    Adagrad,
}

impl OptimizerKind {
    pub fn has_second_moment(self) -> bool {
        matches!(
            self,
            OptimizerKind::Adam | OptimizerKind::Rmsprop | OptimizerKind::Adagrad
        )
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::SgdAmom => "sgd_amom",
            OptimizerKind::Adam => "adam",
            OptimizerKind::Rmsprop => "rmsprop",
            OptimizerKind::Adagrad => "adagrad",
        };
        f.write_str(s)
    }
}

fn default_momentum() -> f64 {
    0.9
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_rmsprop_decay() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    /// `m` of SGD_AMom.
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Coupled weight decay: `g <- g + weight_decay * w` on multiplicative
    /// weights before the optimizer sees the gradient.
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_rmsprop_decay")]
    pub rmsprop_decay: f64,
}

impl OptimizerConfig {
    pub fn new(kind: OptimizerKind) -> Self {
        Self {
            kind,
            momentum: default_momentum(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            weight_decay: 0.0,
            rmsprop_decay: default_rmsprop_decay(),
        }
    }

    pub fn sgd() -> Self {
        Self::new(OptimizerKind::Sgd)
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }

    pub fn with_momentum(mut self, momentum: f64) -> Self {
        self.momentum = momentum;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(OptimError::Config(format!(
                    "{name} = {v} must lie in [0, 1)"
                )))
            }
        };
        unit("momentum", self.momentum)?;
        unit("beta1", self.beta1)?;
        unit("beta2", self.beta2)?;
        unit("rmsprop_decay", self.rmsprop_decay)?;
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(OptimError::Config(format!(
                "eps = {} must be > 0",
                self.eps
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(OptimError::Config(format!(
                "weight_decay = {} must be >= 0",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// Raw per-layer deltas for weights and biases.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStep {
    pub weights: Dense,
    pub bias: Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepUpdate {
    pub layers: Vec<LayerStep>,
}

#[derive(Debug, Clone, PartialEq)]
struct Moments {
    first: Vec<f64>,
    second: Vec<f64>,
}

impl Moments {
    fn zeros(n: usize) -> Self {
        Self {
            first: vec![0.0; n],
            second: vec![0.0; n],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct LayerBuffers {
    weights: Moments,
    bias: Moments,
}

/// Optimizer hyper-parameters plus per-parameter moment buffers, which
/// start at zero and mirror the model's shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    config: OptimizerConfig,
    steps: u64,
    buffers: Vec<LayerBuffers>,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, model: &Mlp) -> Result<Self> {
        config.validate()?;
        let buffers = model
            .layers()
            .iter()
            .map(|layer| LayerBuffers {
                weights: Moments::zeros(layer.weights.len()),
                bias: Moments::zeros(layer.bias.len()),
            })
            .collect();
        Ok(Self {
            config,
            steps: 0,
            buffers,
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn kind(&self) -> OptimizerKind {
        self.config.kind
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Second raw moment buffer of layer `l`'s weights (`v_t`, or the
    /// accumulated sum of squares for Adagrad).
    pub fn second_moment(&self, layer: usize) -> Option<&[f64]> {
        if !self.config.kind.has_second_moment() {
            return None;
        }
        self.buffers.get(layer).map(|b| b.weights.second.as_slice())
    }

    /// First moment (momentum) buffer of layer `l`'s weights.
    pub fn first_moment(&self, layer: usize) -> Option<&[f64]> {
        self.buffers.get(layer).map(|b| b.weights.first.as_slice())
    }

    pub fn propose_step(&mut self, grads: &GradientSet, model: &Mlp) -> Result<StepUpdate> {
        if grads.layers.len() != self.buffers.len() || model.layer_count() != self.buffers.len() {
            return Err(OptimError::LayerCount {
                state: self.buffers.len(),
                model: grads.layers.len(),
            });
        }
        for (l, g) in grads.layers.iter().enumerate() {
            if !g.weights.is_finite() {
                return Err(OptimError::NonFiniteGradient {
                    layer: l,
                    what: "weight",
                });
            }
            if !g.bias.is_finite() {
                return Err(OptimError::NonFiniteGradient {
                    layer: l,
                    what: "bias",
                });
            }
        }
        self.steps += 1;
        let cfg = self.config.clone();
        let t = self.steps;
        let mut layers = Vec::with_capacity(grads.layers.len());
        for ((g, buf), layer) in grads
            .layers
            .iter()
            .zip(self.buffers.iter_mut())
            .zip(model.layers())
        {
            let shape = g.weights.shape().to_vec();
            if layer.weights.shape() != shape.as_slice() {
                return Err(TensorError::ShapeMismatch {
                    op: "propose_step",
                    left: layer.weights.shape().to_vec(),
                    right: shape,
                }
                .into());
            }
            let mut gw = g.weights.as_slice().to_vec();
            if cfg.weight_decay > 0.0 {
                for (gi, wi) in gw.iter_mut().zip(layer.weights.as_slice()) {
                    *gi += cfg.weight_decay * wi;
                }
            }
            let sw = step_for(&cfg, t, &gw, &mut buf.weights);
            let sb = step_for(&cfg, t, g.bias.as_slice(), &mut buf.bias);
            layers.push(LayerStep {
                weights: Dense::from_vec(shape, sw)?,
                bias: Dense::vector(sb),
            });
        }
        Ok(StepUpdate { layers })
    }

    /// Per-layer p10/p50/p90 of the weights' second-moment buffer.
    pub fn probe_second_moment(&self, epoch: usize) -> Result<MomentProbe> {
        if !self.config.kind.has_second_moment() {
            return Err(OptimError::NoSecondMoment(self.config.kind));
        }
        let layers = self
            .buffers
            .iter()
            .map(|b| {
                let mut v = b.weights.second.clone();
                v.sort_by(f64::total_cmp);
                LayerPercentiles {
                    p10: percentile_sorted(&v, 10.0),
                    p50: percentile_sorted(&v, 50.0),
                    p90: percentile_sorted(&v, 90.0),
                }
            })
            .collect();
        Ok(MomentProbe { epoch, layers })
    }
}

fn step_for(cfg: &OptimizerConfig, t: u64, g: &[f64], m: &mut Moments) -> Vec<f64> {
    match cfg.kind {
        OptimizerKind::Sgd => g.iter().map(|x| -x).collect(),
        OptimizerKind::SgdAmom => {
            let mm = cfg.momentum;
            m.first
                .iter_mut()
                .zip(g)
                .map(|(v, gi)| {
                    *v = mm * *v + (1.0 - mm) * gi;
                    -*v
                })
                .collect()
        }
        OptimizerKind::Adam => {
            let (b1, b2) = (cfg.beta1, cfg.beta2);
            let c1 = 1.0 - b1.powi(t as i32);
            let c2 = 1.0 - b2.powi(t as i32);
            m.first
                .iter_mut()
                .zip(m.second.iter_mut())
                .zip(g)
                .map(|((mi, vi), gi)| {
                    *mi = b1 * *mi + (1.0 - b1) * gi;
                    *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                    let m_hat = *mi / c1;
                    let v_hat = *vi / c2;
                    -m_hat / (v_hat.sqrt() + cfg.eps)
                })
                .collect()
        }
        OptimizerKind::Rmsprop => {
            let rho = cfg.rmsprop_decay;
            m.second
                .iter_mut()
                .zip(g)
                .map(|(vi, gi)| {
                    *vi = rho * *vi + (1.0 - rho) * gi * gi;
                    -gi / (vi.sqrt() + cfg.eps)
                })
                .collect()
        }
        OptimizerKind::Adagrad => m
            .second
            .iter_mut()
            .zip(g)
            .map(|(vi, gi)| {
                *vi += gi * gi;
                -gi / (vi.sqrt() + cfg.eps)
            })
            .collect(),
    }
}

/// Percentile with linear interpolation between closest ranks: the value at
/// fractional rank `p/100 * (n - 1)` of the ascending sample.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let rank = (p / 100.0).clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = rank.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = rank - lo as f64;
            sorted[lo] + frac * (sorted[hi] - sorted[lo])
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerPercentiles {
    pub p10: f64,
    pub p50: f64,
    pub p90: f64,
}

/// Snapshot of second-moment percentiles for every layer at one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentProbe {
    pub epoch: usize,
    pub layers: Vec<LayerPercentiles>,
}

pub const MOMENT_PROBE_CSV_HEADER: &str = "epoch,layer_index,p10,p50,p90";

/// Writes probes as `epoch,layer_index,p10,p50,p90` rows under a header.
pub fn write_moment_probes_csv<W: std::io::Write>(
    probes: &[MomentProbe],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "{MOMENT_PROBE_CSV_HEADER}")?;
    for probe in probes {
        for (l, p) in probe.layers.iter().enumerate() {
            writeln!(out, "{},{},{},{},{}", probe.epoch, l, p.p10, p.p50, p.p90)?;
        }
    }
    Ok(())
}

/// Non-Layca update: `w <- w + rate_l * s_w` and `b <- b + rate_l * s_b`.
pub fn apply_raw(model: &mut Mlp, step: &StepUpdate, rates: &[f64]) -> Result<()> {
    check_rates(model, step, rates)?;
    for ((layer, s), &rate) in model.layers_mut().iter_mut().zip(&step.layers).zip(rates) {
        layer.weights.add_scaled(&s.weights, rate)?;
        layer.bias.add_scaled(&s.bias, rate)?;
    }
    Ok(())
}

pub(crate) fn check_rates(model: &Mlp, step: &StepUpdate, rates: &[f64]) -> Result<()> {
    if step.layers.len() != model.layer_count() || rates.len() != model.layer_count() {
        return Err(OptimError::LayerCount {
            state: step.layers.len().min(rates.len()),
            model: model.layer_count(),
        });
    }
    for (layer, &rate) in rates.iter().enumerate() {
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(OptimError::BadRate { layer, rate });
        }
    }
    Ok(())
}
