//! Layer-level rotation control.
//!
//! [`layca_transform`] turns a raw optimizer step into a rotation of the
//! layer's weight vector whose angle is exactly `atan(rate)`:
//!
//! 1. project the step onto the space orthogonal to `w`;
//! 2. rescale it to norm `‖w‖`;
//! 3. take the step `w + rate * s`;
//! 4. rescale the result back onto the sphere of radius `‖w_0‖`.
//!
//! [`lars_transform`] keeps only operations 2 and 3 and bounds the per-step
//! norm growth to a fraction of the initial norm.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::Mlp;
use crate::optim::{check_rates, OptimError, StepUpdate};
use crate::tensor::{dot, l2_norm, Dense, TensorError};

/// Relative size below which a (projected) step counts as degenerate.
pub const DEGENERATE_STEP_RATIO: f64 = 1e-12;

pub const DEFAULT_LARS_NORM_GROWTH_CAP: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LaycaError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error("cannot rotate a zero weight vector")]
    ZeroWeights,
    #[error("weights and step differ in length: {weights} vs {step}")]
    Length { weights: usize, step: usize },
    #[error("rate {0} must be finite and >= 0")]
    BadRate(f64),
    #[error("LARS norm growth cap must be > 0, got {0}")]
    BadCap(f64),
}

pub type Result<T> = std::result::Result<T, LaycaError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LaycaVariant {
    Layca,
    Lars,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaycaConfig {
    pub variant: LaycaVariant,
    #[serde(default = "default_cap")]
    pub lars_norm_growth_cap: f64,
}

fn default_cap() -> f64 {
    DEFAULT_LARS_NORM_GROWTH_CAP
}

impl LaycaConfig {
    pub fn layca() -> Self {
        Self {
            variant: LaycaVariant::Layca,
            lars_norm_growth_cap: DEFAULT_LARS_NORM_GROWTH_CAP,
        }
    }

    pub fn lars() -> Self {
        Self {
            variant: LaycaVariant::Lars,
            lars_norm_growth_cap: DEFAULT_LARS_NORM_GROWTH_CAP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.variant == LaycaVariant::Lars
            && !(self.lars_norm_growth_cap > 0.0 && self.lars_norm_growth_cap.is_finite())
        {
            return Err(LaycaError::BadCap(self.lars_norm_growth_cap));
        }
        Ok(())
    }
}

/// Outcome of transforming one layer.
#[derive(Debug, Clone, PartialEq)]
pub enum Transformed {
    Updated(Vec<f64>),
    /// The step was zero or parallel to the weights; weights are unchanged.
    Skipped,
}

fn check_inputs(w: &[f64], s: &[f64], rate: f64) -> Result<f64> {
    if w.len() != s.len() {
        return Err(LaycaError::Length {
            weights: w.len(),
            step: s.len(),
        });
    }
    if !(rate.is_finite() && rate >= 0.0) {
        return Err(LaycaError::BadRate(rate));
    }
    let w_norm = l2_norm(w);
    if w_norm == 0.0 {
        return Err(LaycaError::ZeroWeights);
    }
    Ok(w_norm)
}

/// Orthogonal projection of `s` away from `w`: `s - (s·w) w / (w·w)`.
pub fn project_orthogonal(w: &[f64], s: &[f64]) -> Result<Vec<f64>> {
    let ww = dot(w, w)?;
    if ww == 0.0 {
        return Err(LaycaError::ZeroWeights);
    }
    let coef = dot(s, w)? / ww;
    Ok(s.iter().zip(w).map(|(si, wi)| si - coef * wi).collect())
}

pub fn layca_transform(w: &[f64], w_init_norm: f64, s: &[f64], rate: f64) -> Result<Transformed> {
    let w_norm = check_inputs(w, s, rate)?;
    let projected = project_orthogonal(w, s)?;
    let s_norm = l2_norm(&projected);
    if s_norm < DEGENERATE_STEP_RATIO * w_norm {
        return Ok(Transformed::Skipped);
    }
    let step_scale = rate * w_norm / s_norm;
    let mut out: Vec<f64> = w
        .iter()
        .zip(&projected)
        .map(|(wi, si)| wi + step_scale * si)
        .collect();
    let out_norm = l2_norm(&out);
    let back = w_init_norm / out_norm;
    out.iter_mut().for_each(|v| *v *= back);
    Ok(Transformed::Updated(out))
}

pub fn lars_transform(
    w: &[f64],
    w_init_norm: f64,
    s: &[f64],
    rate: f64,
    norm_growth_cap: f64,
) -> Result<Transformed> {
    let w_norm = check_inputs(w, s, rate)?;
    if !(norm_growth_cap > 0.0 && norm_growth_cap.is_finite()) {
        return Err(LaycaError::BadCap(norm_growth_cap));
    }
    let s_norm = l2_norm(s);
    if s_norm < DEGENERATE_STEP_RATIO * w_norm {
        return Ok(Transformed::Skipped);
    }
    let step_scale = rate * w_norm / s_norm;
    let mut out: Vec<f64> = w
        .iter()
        .zip(s)
        .map(|(wi, si)| wi + step_scale * si)
        .collect();
    let max_norm = w_norm + norm_growth_cap * w_init_norm;
    let out_norm = l2_norm(&out);
    if out_norm > max_norm {
        let shrink = max_norm / out_norm;
        out.iter_mut().for_each(|v| *v *= shrink);
    }
    Ok(Transformed::Updated(out))
}

/// Angle in radians between two nonzero vectors.
///
/// Evaluated as `2 atan2(|â - b̂|, |â + b̂|)` on the unit vectors, which equals
/// `acos(cos)` but stays accurate for tiny angles and is exactly 0 for
/// identical inputs.
pub fn rotation_angle(before: &[f64], after: &[f64]) -> Result<f64> {
    if before.len() != after.len() {
        return Err(LaycaError::Length {
            weights: before.len(),
            step: after.len(),
        });
    }
    let na = l2_norm(before);
    let nb = l2_norm(after);
    if na == 0.0 || nb == 0.0 {
        return Err(LaycaError::ZeroWeights);
    }
    let (diff, sum) = unit_diff_sum(before, na, after, nb);
    Ok(2.0 * diff.atan2(sum))
}

/// `(|a/na - b/nb|, |a/na + b/nb|)`.
pub(crate) fn unit_diff_sum(a: &[f64], na: f64, b: &[f64], nb: f64) -> (f64, f64) {
    let (mut d2, mut s2) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (u, v) = (x / na, y / nb);
        d2 += (u - v) * (u - v);
        s2 += (u + v) * (u + v);
    }
    (d2.sqrt(), s2.sqrt())
}

/// Applies a raw step to every layer through Layca or LARS. Weights are
/// transformed layer by layer in forward order; biases take the plain
/// `b + rate_l * s_b` update. Returns, per layer, whether the weight update
/// was skipped.
pub fn apply_controlled(
    model: &mut Mlp,
    step: &StepUpdate,
    rates: &[f64],
    config: &LaycaConfig,
) -> Result<Vec<bool>> {
    config.validate()?;
    check_rates(model, step, rates)?;
    let mut skipped = Vec::with_capacity(rates.len());
    for ((layer, s), &rate) in model.layers_mut().iter_mut().zip(&step.layers).zip(rates) {
        let init_norm = l2_norm(layer.weights_init().as_slice());
        let outcome = match config.variant {
            LaycaVariant::Layca => layca_transform(
                layer.weights.as_slice(),
                init_norm,
                s.weights.as_slice(),
                rate,
            )?,
            LaycaVariant::Lars => lars_transform(
                layer.weights.as_slice(),
                init_norm,
                s.weights.as_slice(),
                rate,
                config.lars_norm_growth_cap,
            )?,
        };
        match outcome {
            Transformed::Updated(w) => {
                layer.weights = Dense::from_vec(layer.weights.shape().to_vec(), w)?;
                skipped.push(false);
            }
            Transformed::Skipped => skipped.push(true),
        }
        layer.bias.add_scaled(&s.bias, rate)?;
    }
    Ok(skipped)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn updated(t: Transformed) -> Vec<f64> {
        match t {
            Transformed::Updated(w) => w,
            Transformed::Skipped => panic!("unexpected skip"),
        }
    }

    #[test]
    fn hand_executed_layca_step() {
        // op1: s=[0,1]; op2: ‖s‖=‖w‖=1; op3: w=[1,1]; op4: w=[1,1]/√2
        let w = updated(layca_transform(&[1.0, 0.0], 1.0, &[1.0, 1.0], 1.0).unwrap());
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((w[0] - h).abs() < 1e-15 && (w[1] - h).abs() < 1e-15);
        let angle = rotation_angle(&[1.0, 0.0], &w).unwrap();
        assert!((angle - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn zero_rate_only_reprojects() {
        let w = [3.0, 4.0];
        let out = updated(layca_transform(&w, 10.0, &[1.0, -1.0], 0.0).unwrap());
        assert_eq!(out, vec![6.0, 8.0]);
        let on_sphere = updated(layca_transform(&w, 5.0, &[1.0, -1.0], 0.0).unwrap());
        assert_eq!(on_sphere, w.to_vec());
    }

    #[test]
    fn parallel_or_zero_step_is_skipped() {
        assert_eq!(
            layca_transform(&[1.0, 2.0], 1.0, &[2.0, 4.0], 0.5).unwrap(),
            Transformed::Skipped
        );
        assert_eq!(
            layca_transform(&[1.0, 2.0], 1.0, &[0.0, 0.0], 0.5).unwrap(),
            Transformed::Skipped
        );
        assert_eq!(
            lars_transform(&[1.0, 2.0], 1.0, &[0.0, 0.0], 0.5, 1e-4).unwrap(),
            Transformed::Skipped
        );
    }

    #[test]
    fn zero_weights_are_rejected() {
        assert_eq!(
            layca_transform(&[0.0, 0.0], 1.0, &[1.0, 0.0], 0.1),
            Err(LaycaError::ZeroWeights)
        );
        assert!(rotation_angle(&[0.0], &[1.0]).is_err());
    }

    #[test]
    fn hand_executed_lars_step() {
        // op2: ‖s‖ -> ‖w‖ = 1 so s=[0,1]; op3: w=[1,1]; huge cap never binds
        let w = updated(lars_transform(&[1.0, 0.0], 1.0, &[0.0, 2.0], 1.0, 1e9).unwrap());
        assert_eq!(w, vec![1.0, 1.0]);
    }

    #[test]
    fn lars_cap_clips_growth_exactly() {
        let w = [3.0, 4.0];
        let out = updated(lars_transform(&w, 5.0, &[-4.0, 3.0], 0.5, 1e-4).unwrap());
        let grown = l2_norm(&out) - 5.0;
        assert!((grown - 1e-4 * 5.0).abs() < 1e-12);
        // uncapped growth stays within Pythagoras
        let free = updated(lars_transform(&w, 5.0, &[-4.0, 3.0], 0.01, 1.0).unwrap());
        assert!(l2_norm(&free) <= 5.0 * (1.0f64 + 1e-4).sqrt() + 1e-12);
    }

    #[test]
    fn rotation_angle_examples() {
        assert_eq!(rotation_angle(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        let a = rotation_angle(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!((a - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn bad_arguments() {
        assert!(matches!(
            layca_transform(&[1.0], 1.0, &[1.0, 2.0], 0.1),
            Err(LaycaError::Length { .. })
        ));
        assert!(matches!(
            layca_transform(&[1.0, 0.0], 1.0, &[0.0, 1.0], -0.1),
            Err(LaycaError::BadRate(_))
        ));
        assert!(matches!(
            lars_transform(&[1.0, 0.0], 1.0, &[0.0, 1.0], 0.1, 0.0),
            Err(LaycaError::BadCap(_))
        ));
    }
}
