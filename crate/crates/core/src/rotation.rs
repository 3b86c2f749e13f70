//! Layer rotation monitoring and replay.
//!
//! A [`RotationRecord`] holds, for every layer, the cosine distance between
//! the current and the initial weights sampled at epoch boundaries (the
//! layer rotation curve), and the angle each optimization step rotated the
//! weights by. [`build_replay`] converts recorded angles into the per-step
//! rates that make Layca reproduce them, since Layca rotates by `atan(rate)`.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layca::{rotation_angle, unit_diff_sum};
use crate::nn::Mlp;
use crate::tensor::l2_norm;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RotationError {
    #[error("cosine distance of a zero vector is undefined")]
    ZeroVector,
    #[error("vectors differ in length: {0} vs {1}")]
    Length(usize, usize),
    #[error("epoch {epoch} is not after the last recorded epoch {last}")]
    EpochOrder { epoch: usize, last: usize },
    #[error("record tracks {record} layers, model has {model}")]
    LayerCount { record: usize, model: usize },
    #[error("layer {layer} index out of range")]
    LayerIndex { layer: usize },
    #[error("angle {angle} at layer {layer}, step {step} is not below pi/2")]
    AngleTooLarge {
        layer: usize,
        step: usize,
        angle: f64,
    },
    #[error("layers recorded different step counts")]
    RaggedSteps,
}

pub type Result<T> = std::result::Result<T, RotationError>;

/// `1 - cos(a, b)`, clamped to `[0, 2]`.
///
/// Computed as `|â - b̂|² / 2`, which is the same quantity without the
/// cancellation of `1 - cos` near 0.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(RotationError::Length(a.len(), b.len()));
    }
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(RotationError::ZeroVector);
    }
    let (diff, _) = unit_diff_sum(a, na, b, nb);
    Ok((0.5 * diff * diff).clamp(0.0, 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub cosine_distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepAngle {
    pub theta: f64,
    /// The layer's update was skipped as degenerate; `theta` is 0.
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerTrace {
    pub name: String,
    pub curve: Vec<CurvePoint>,
    pub angles: Vec<StepAngle>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationRecord {
    pub layers: Vec<LayerTrace>,
}

impl RotationRecord {
    pub fn new(layer_names: Vec<String>) -> Self {
        Self {
            layers: layer_names
                .into_iter()
                .map(|name| LayerTrace {
                    name,
                    curve: Vec::new(),
                    angles: Vec::new(),
                })
                .collect(),
        }
    }

    pub fn for_model(model: &Mlp) -> Self {
        Self::new(model.layers().iter().map(|l| l.name()).collect())
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    /// Appends each layer's cosine distance from its initialization.
    /// Epochs must be strictly increasing.
    pub fn record_epoch(&mut self, model: &Mlp, epoch: usize) -> Result<()> {
        if model.layer_count() != self.layers.len() {
            return Err(RotationError::LayerCount {
                record: self.layers.len(),
                model: model.layer_count(),
            });
        }
        if let Some(last) = self.layers.first().and_then(|l| l.curve.last()) {
            if epoch <= last.epoch {
                return Err(RotationError::EpochOrder {
                    epoch,
                    last: last.epoch,
                });
            }
        }
        let distances = model
            .layers()
            .iter()
            .map(|l| cosine_distance(l.weights_init().as_slice(), l.weights.as_slice()))
            .collect::<Result<Vec<_>>>()?;
        for (trace, d) in self.layers.iter_mut().zip(distances) {
            trace.curve.push(CurvePoint {
                epoch,
                cosine_distance: d,
            });
        }
        Ok(())
    }

    /// Appends the angle between `before` and `after` for `layer`.
    pub fn record_step_angle(
        &mut self,
        layer: usize,
        before: &[f64],
        after: &[f64],
    ) -> Result<f64> {
        let trace = self
            .layers
            .get_mut(layer)
            .ok_or(RotationError::LayerIndex { layer })?;
        let theta = rotation_angle(before, after).map_err(|_| RotationError::ZeroVector)?;
        trace.angles.push(StepAngle {
            theta,
            skipped: false,
        });
        Ok(theta)
    }

    /// Records a zero angle for a step in which the layer was not updated.
    pub fn record_skipped_step(&mut self, layer: usize) -> Result<()> {
        let trace = self
            .layers
            .get_mut(layer)
            .ok_or(RotationError::LayerIndex { layer })?;
        trace.angles.push(StepAngle {
            theta: 0.0,
            skipped: true,
        });
        Ok(())
    }

    /// Number of recorded steps, if all layers agree on it.
    pub fn step_count(&self) -> Result<usize> {
        let n = self.layers.first().map_or(0, |l| l.angles.len());
        if self.layers.iter().any(|l| l.angles.len() != n) {
            return Err(RotationError::RaggedSteps);
        }
        Ok(n)
    }

    /// Mean over layers of the last recorded cosine distance.
    pub fn mean_final_distance(&self) -> Option<f64> {
        let finals: Vec<f64> = self
            .layers
            .iter()
            .filter_map(|l| l.curve.last().map(|p| p.cosine_distance))
            .collect();
        if finals.is_empty() {
            None
        } else {
            Some(finals.iter().sum::<f64>() / finals.len() as f64)
        }
    }

    pub fn final_distances(&self) -> Vec<f64> {
        self.layers
            .iter()
            .filter_map(|l| l.curve.last().map(|p| p.cosine_distance))
            .collect()
    }
}

/// Per-layer, per-step Layca rates `tan(theta)` recovered from a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplaySchedule {
    pub rates: Vec<Vec<f64>>,
}

impl ReplaySchedule {
    pub fn layer_count(&self) -> usize {
        self.rates.len()
    }

    pub fn step_count(&self) -> usize {
        self.rates.first().map_or(0, Vec::len)
    }

    /// Rates for every layer at `step`.
    pub fn rates_at(&self, step: usize) -> Option<Vec<f64>> {
        self.rates.iter().map(|r| r.get(step).copied()).collect()
    }
}

pub fn build_replay(record: &RotationRecord) -> Result<ReplaySchedule> {
    record.step_count()?;
    let rates = record
        .layers
        .iter()
        .enumerate()
        .map(|(layer, trace)| {
            trace
                .angles
                .iter()
                .enumerate()
                .map(|(step, a)| {
                    if a.theta >= FRAC_PI_2 || !a.theta.is_finite() {
                        Err(RotationError::AngleTooLarge {
                            layer,
                            step,
                            angle: a.theta,
                        })
                    } else {
                        Ok(a.theta.tan())
                    }
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplaySchedule { rates })
}

pub const CURVE_CSV_HEADER: &str = "run_id,layer_index,layer_name,epoch,cosine_distance";
pub const ANGLE_CSV_HEADER: &str = "run_id,layer_index,step,theta_radians";

/// Rows ordered by layer, then epoch.
pub fn write_curves_csv<W: std::io::Write>(
    record: &RotationRecord,
    run_id: &str,
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "{CURVE_CSV_HEADER}")?;
    for (l, trace) in record.layers.iter().enumerate() {
        for p in &trace.curve {
            writeln!(
                out,
                "{},{},{},{},{}",
                run_id, l, trace.name, p.epoch, p.cosine_distance
            )?;
        }
    }
    Ok(())
}

/// Rows ordered by layer, then step (0-based).
pub fn write_angles_csv<W: std::io::Write>(
    record: &RotationRecord,
    run_id: &str,
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "{ANGLE_CSV_HEADER}")?;
    for (l, trace) in record.layers.iter().enumerate() {
        for (step, a) in trace.angles.iter().enumerate() {
            writeln!(out, "{},{},{},{}", run_id, l, step, a.theta)?;
        }
    }
    Ok(())
}
