//! Per-layer learning rates: a global rate with warmup and step decay,
//! multiplied by depth-dependent factors controlled by `alpha`.
//!
//! All schedules are indexed by 0-based training epoch.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("alpha = {0} must lie in [-1, 1]")]
    AlphaOutOfRange(f64),
    #[error("layer index {index} out of range for {count} layers")]
    LayerIndex { index: usize, count: usize },
    #[error("invalid schedule: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, ScheduleError>;

/// Divide the global rate by `factor` from `epoch` on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayStep {
    pub epoch: usize,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub initial_rate: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub decay: Vec<DecayStep>,
    #[serde(default)]
    pub warmup_epochs: usize,
    pub total_epochs: usize,
}

impl ScheduleConfig {
    pub fn constant(initial_rate: f64, total_epochs: usize) -> Self {
        Self {
            initial_rate,
            alpha: 0.0,
            decay: Vec::new(),
            warmup_epochs: 0,
            total_epochs,
        }
    }

    /// Initial rate 0 is accepted so that a run can be frozen on purpose.
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_rate >= 0.0 && self.initial_rate.is_finite()) {
            return Err(ScheduleError::Invalid(format!(
                "initial_rate = {} must be finite and >= 0",
                self.initial_rate
            )));
        }
        if !(-1.0..=1.0).contains(&self.alpha) {
            return Err(ScheduleError::AlphaOutOfRange(self.alpha));
        }
        let mut prev: Option<usize> = None;
        for d in &self.decay {
            if prev.is_some_and(|p| d.epoch <= p) {
                return Err(ScheduleError::Invalid(
                    "decay epochs must be strictly increasing".into(),
                ));
            }
            if d.epoch >= self.total_epochs {
                return Err(ScheduleError::Invalid(format!(
                    "decay epoch {} is not below total_epochs {}",
                    d.epoch, self.total_epochs
                )));
            }
            if !(d.factor > 1.0 && d.factor.is_finite()) {
                return Err(ScheduleError::Invalid(format!(
                    "decay factor {} must be > 1",
                    d.factor
                )));
            }
            prev = Some(d.epoch);
        }
        Ok(())
    }
}

/// Depth multiplier for layer `l` of `L`:
/// `(1 - α)^(5 (L-1-l)/(L-1))` for α > 0 and `(1 + α)^(5 l/(L-1))` otherwise.
/// A single-layer network always gets 1.
pub fn alpha_multiplier(layer: usize, layer_count: usize, alpha: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&alpha) {
        return Err(ScheduleError::AlphaOutOfRange(alpha));
    }
    if layer >= layer_count {
        return Err(ScheduleError::LayerIndex {
            index: layer,
            count: layer_count,
        });
    }
    if layer_count == 1 {
        return Ok(1.0);
    }
    let span = (layer_count - 1) as f64;
    Ok(if alpha > 0.0 {
        (1.0 - alpha).powf(5.0 * (layer_count - 1 - layer) as f64 / span)
    } else {
        (1.0 + alpha).powf(5.0 * layer as f64 / span)
    })
}

/// Global rate at `epoch`: during warmup it rises linearly from a tenth of
/// the initial rate at epoch 0 to the full rate at `warmup_epochs`; every
/// decay step whose epoch has been reached divides it.
pub fn global_rate(config: &ScheduleConfig, epoch: usize) -> f64 {
    let mut rate = config.initial_rate;
    if epoch < config.warmup_epochs {
        let progress = epoch as f64 / config.warmup_epochs as f64;
        rate *= 0.1 + 0.9 * progress;
    }
    for d in config.decay.iter().filter(|d| d.epoch <= epoch) {
        rate /= d.factor;
    }
    rate
}

pub fn effective_rates(
    config: &ScheduleConfig,
    epoch: usize,
    layer_count: usize,
) -> Result<Vec<f64>> {
    let global = global_rate(config, epoch);
    (0..layer_count)
        .map(|l| Ok(alpha_multiplier(l, layer_count, config.alpha)? * global))
        .collect()
}

/// The ten initial rates `3^-7, 3^-6, ..., 3^2`.
pub fn standard_grid() -> Vec<f64> {
    (-7..=2).map(|e| 3f64.powi(e)).collect()
}

/// Thirteen `alpha` values from -0.9 to 0.9 in steps of 0.15.
pub fn standard_alpha_grid() -> Vec<f64> {
    (-6..=6).map(|i| f64::from(3 * i) / 20.0).collect()
}
