//! The training loop.

use layerspin_core::layca::apply_controlled;
use layerspin_core::optim::{apply_raw, MomentProbe, OptimError};
use layerspin_core::schedules::{effective_rates, global_rate};
use layerspin_core::{
    Mlp, OptimizerConfig, OptimizerKind, OptimizerState, RotationRecord, SeededRng,
};
use serde::{Deserialize, Serialize};

use crate::config::{ReplayFile, RunConfig, UpdateRule};
use crate::data::DataSplit;
use crate::error::{HarnessError, Result};

pub const STREAM_INIT: u64 = 0;
pub const STREAM_SHUFFLE: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub global_rate: f64,
    pub train_loss: f64,
    pub train_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub mean_cosine_distance: f64,
    pub skipped_updates: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub config: RunConfig,
    pub model: Mlp,
    pub record: RotationRecord,
    pub metrics: Vec<EpochMetrics>,
    pub probes: Vec<MomentProbe>,
    pub steps_per_epoch: usize,
    pub replay_source: Option<String>,
}

impl RunOutcome {
    pub fn final_metrics(&self) -> &EpochMetrics {
        self.metrics.last().expect("a run has at least one epoch")
    }

    pub fn skipped_updates(&self) -> usize {
        self.metrics.iter().map(|m| m.skipped_updates).sum()
    }

    /// Per-step rates that let a Layca run reproduce this run's rotations.
    pub fn replay_file(&self) -> Result<ReplayFile> {
        Ok(ReplayFile {
            source_run_id: self.config.run_id.clone(),
            source_optimizer: self.config.optimizer.kind,
            source_beta1: self.config.optimizer.beta1,
            steps_per_epoch: self.steps_per_epoch,
            schedule: layerspin_core::rotation::build_replay(&self.record)?,
        })
    }
}

/// Config for replaying `replay` with Layca. The base optimizer is plain SGD,
/// or SGD with averaged momentum (`m = beta1`) when the source ran Adam.
pub fn replay_config(source: &RunConfig, replay: &ReplayFile) -> RunConfig {
    let mut cfg = source.clone();
    cfg.run_id = format!("{}-adaptcopy", replay.source_run_id);
    cfg.update = UpdateRule::Layca;
    cfg.optimizer = match replay.source_optimizer {
        OptimizerKind::Adam => {
            OptimizerConfig::new(OptimizerKind::SgdAmom).with_momentum(replay.source_beta1)
        }
        _ => OptimizerConfig::sgd(),
    };
    cfg.grid = None;
    cfg.monitor.probe_epochs.clear();
    cfg
}

fn diverged(cfg: &RunConfig, epoch: usize, step: usize, reason: String) -> HarnessError {
    HarnessError::Diverged {
        run_id: cfg.run_id.clone(),
        epoch: epoch + 1,
        step,
        last_good_epoch: epoch,
        reason,
    }
}

/// Trains one configuration. With `replay`, the per-step layer rates come
/// from the recording and the update rule must be Layca.
pub fn train(cfg: &RunConfig, data: &DataSplit, replay: Option<&ReplayFile>) -> Result<RunOutcome> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(HarnessError::Config("training set is empty".into()));
    }
    if data.train.features() != cfg.model.input_width() {
        return Err(HarnessError::Config(format!(
            "model input width {} but samples have {} features",
            cfg.model.input_width(),
            data.train.features()
        )));
    }
    let schedule = cfg.schedule_config();
    let n = data.train.len();
    let steps_per_epoch = n.div_ceil(cfg.batch_size);
    let layer_count = cfg.model.layer_count();

    if let Some(r) = replay {
        if cfg.update != UpdateRule::Layca {
            return Err(HarnessError::Config(
                "replay requires the layca update rule".into(),
            ));
        }
        let expected = steps_per_epoch * cfg.epochs;
        if r.schedule.layer_count() != layer_count
            || r.schedule.step_count() != expected
            || r.steps_per_epoch != steps_per_epoch
        {
            return Err(HarnessError::Config(format!(
                "replay has {} layers x {} steps ({} per epoch); run needs {} x {} ({} per epoch)",
                r.schedule.layer_count(),
                r.schedule.step_count(),
                r.steps_per_epoch,
                layer_count,
                expected,
                steps_per_epoch
            )));
        }
    }

    let mut init_rng = SeededRng::stream(cfg.seed, STREAM_INIT);
    let mut shuffle_rng = SeededRng::stream(cfg.seed, STREAM_SHUFFLE);
    let mut model = Mlp::init(cfg.model.clone(), &mut init_rng)?;
    let mut opt = OptimizerState::new(cfg.optimizer.clone(), &model)?;
    let controller = cfg.update.controller();
    let mut record = RotationRecord::for_model(&model);
    record.record_epoch(&model, 0)?;

    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut probes = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    let mut global_step = 0usize;

    for epoch in 0..cfg.epochs {
        let scheduled = effective_rates(&schedule, epoch, layer_count)?;
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut skipped_updates = 0;
        for batch in order.chunks(cfg.batch_size) {
            let x = data.train.inputs.gather_rows(batch)?;
            let y: Vec<usize> = batch.iter().map(|&i| data.train.labels[i]).collect();
            let (loss, grads) = model.loss_and_grad(&x, &y)?;
            if !loss.is_finite() {
                return Err(diverged(cfg, epoch, global_step, format!("loss {loss}")));
            }
            loss_sum += loss * batch.len() as f64;
            let step = match opt.propose_step(&grads, &model) {
                Ok(s) => s,
                Err(e @ OptimError::NonFiniteGradient { .. }) => {
                    return Err(diverged(cfg, epoch, global_step, e.to_string()))
                }
                Err(e) => return Err(e.into()),
            };
            let rates = match replay {
                Some(r) => r.schedule.rates_at(global_step).ok_or_else(|| {
                    HarnessError::Config(format!("replay has no step {global_step}"))
                })?,
                None => scheduled.clone(),
            };
            let before: Option<Vec<Vec<f64>>> = cfg.monitor.step_angles.then(|| {
                model
                    .layers()
                    .iter()
                    .map(|l| l.weights.as_slice().to_vec())
                    .collect()
            });
            let skipped = match &controller {
                None => {
                    apply_raw(&mut model, &step, &rates)?;
                    vec![false; layer_count]
                }
                Some(c) => apply_controlled(&mut model, &step, &rates, c)?,
            };
            skipped_updates += skipped.iter().filter(|&&s| s).count();
            if let Some((l, _)) = model
                .layers()
                .iter()
                .enumerate()
                .find(|(_, l)| !l.weights.is_finite() || !l.bias.is_finite())
            {
                return Err(diverged(
                    cfg,
                    epoch,
                    global_step,
                    format!("non-finite parameters in layer {l}"),
                ));
            }
            if let Some(before) = before {
                for (l, w0) in before.iter().enumerate() {
                    if skipped[l] {
                        record.record_skipped_step(l)?;
                    } else {
                        record.record_step_angle(l, w0, model.layers()[l].weights.as_slice())?;
                    }
                }
            }
            global_step += 1;
        }
        record.record_epoch(&model, epoch + 1)?;
        let evaluate = (epoch + 1) % cfg.monitor.eval_every == 0 || epoch + 1 == cfg.epochs;
        let (train_accuracy, test_accuracy) = if evaluate {
            (
                Some(model.accuracy(&data.train.inputs, &data.train.labels)?),
                (!data.test.is_empty())
                    .then(|| model.accuracy(&data.test.inputs, &data.test.labels))
                    .transpose()?,
            )
        } else {
            (None, None)
        };
        if cfg.monitor.probe_epochs.contains(&(epoch + 1)) {
            probes.push(opt.probe_second_moment(epoch + 1)?);
        }
        metrics.push(EpochMetrics {
            epoch: epoch + 1,
            global_rate: global_rate(&schedule, epoch),
            train_loss: loss_sum / n as f64,
            train_accuracy,
            test_accuracy,
            mean_cosine_distance: record.mean_final_distance().unwrap_or(0.0),
            skipped_updates,
        });
    }

    Ok(RunOutcome {
        config: cfg.clone(),
        model,
        record,
        metrics,
        probes,
        steps_per_epoch,
        replay_source: replay.map(|r| r.source_run_id.clone()),
    })
}
