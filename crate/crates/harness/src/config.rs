//! JSON run and grid configuration.

use std::fs;
use std::path::{Path, PathBuf};

use layerspin_core::layca::{LaycaConfig, LaycaVariant, DEFAULT_LARS_NORM_GROWTH_CAP};
use layerspin_core::schedules::{standard_alpha_grid, standard_grid, DecayStep, ScheduleConfig};
use layerspin_core::{ModelSpec, OptimizerConfig};
use serde::{Deserialize, Serialize};

use crate::data::DatasetSpec;
use crate::error::{HarnessError, Result};

/// How the optimizer's step reaches the weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "rule", rename_all = "lowercase", deny_unknown_fields)]
pub enum UpdateRule {
    #[default]
    Raw,
    Layca,
    Lars {
        #[serde(default = "default_cap")]
        norm_growth_cap: f64,
    },
}

fn default_cap() -> f64 {
    DEFAULT_LARS_NORM_GROWTH_CAP
}

impl UpdateRule {
    pub fn controller(&self) -> Option<LaycaConfig> {
        match *self {
            UpdateRule::Raw => None,
            UpdateRule::Layca => Some(LaycaConfig::layca()),
            UpdateRule::Lars { norm_growth_cap } => Some(LaycaConfig {
                variant: LaycaVariant::Lars,
                lars_norm_growth_cap: norm_growth_cap,
            }),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            UpdateRule::Raw => "raw",
            UpdateRule::Layca => "layca",
            UpdateRule::Lars { .. } => "lars",
        }
    }
}

/// Rate schedule without its length; the run's epoch count fills that in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub initial_rate: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub decay: Vec<DecayStep>,
    #[serde(default)]
    pub warmup_epochs: usize,
}

impl ScheduleSpec {
    pub fn constant(initial_rate: f64) -> Self {
        Self {
            initial_rate,
            alpha: 0.0,
            decay: Vec::new(),
            warmup_epochs: 0,
        }
    }

    pub fn for_epochs(&self, total_epochs: usize) -> ScheduleConfig {
        ScheduleConfig {
            initial_rate: self.initial_rate,
            alpha: self.alpha,
            decay: self.decay.clone(),
            warmup_epochs: self.warmup_epochs,
            total_epochs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorConfig {
    /// Record the per-layer rotation angle of every step (needed for replay).
    #[serde(default = "yes")]
    pub step_angles: bool,
    /// Evaluate train/test accuracy every this many epochs (the last epoch is
    /// always evaluated).
    #[serde(default = "one")]
    pub eval_every: usize,
    /// 1-based epochs at which second-moment percentiles are captured.
    #[serde(default)]
    pub probe_epochs: Vec<usize>,
    /// Neurons of layer 0 exported as images; 0 disables the export.
    #[serde(default = "five")]
    pub feature_neurons: usize,
}

fn yes() -> bool {
    true
}
fn one() -> usize {
    1
}
fn five() -> usize {
    5
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            step_angles: true,
            eval_every: 1,
            probe_epochs: Vec::new(),
            feature_neurons: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Sweep {
    /// Rates at the anchor alpha, plus alphas at the anchor rate.
    #[default]
    Axes,
    /// Every (rate, alpha) pair.
    Cross,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "standard_grid")]
    pub rates: Vec<f64>,
    #[serde(default = "standard_alpha_grid")]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub sweep: Sweep,
    #[serde(default = "anchor_rate")]
    pub anchor_rate: f64,
    #[serde(default)]
    pub anchor_alpha: f64,
}

fn anchor_rate() -> f64 {
    3f64.powi(-3)
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            rates: standard_grid(),
            alphas: standard_alpha_grid(),
            sweep: Sweep::Axes,
            anchor_rate: anchor_rate(),
            anchor_alpha: 0.0,
        }
    }
}

impl GridSpec {
    /// `(rate, alpha)` pairs in sweep order without duplicates.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        let mut push = |p: (f64, f64)| {
            if !out.contains(&p) {
                out.push(p);
            }
        };
        match self.sweep {
            Sweep::Axes => {
                self.rates
                    .iter()
                    .for_each(|&r| push((r, self.anchor_alpha)));
                self.alphas
                    .iter()
                    .for_each(|&a| push((self.anchor_rate, a)));
            }
            Sweep::Cross => {
                for &r in &self.rates {
                    for &a in &self.alphas {
                        push((r, a));
                    }
                }
            }
        }
        out
    }
}

fn default_batch() -> usize {
    128
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run_id: String,
    pub model: ModelSpec,
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub update: UpdateRule,
    pub schedule: ScheduleSpec,
    pub dataset: DatasetSpec,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub monitor: MonitorConfig,
    /// Present only in grid files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
}

impl RunConfig {
    /// Reads a config; relative dataset paths resolve against the file's
    /// directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.dataset.resolve_paths(&base);
        Ok(cfg)
    }

    pub fn schedule_config(&self) -> ScheduleConfig {
        self.schedule.for_epochs(self.epochs)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(format!("{}: {m}", self.run_id)));
        if self.run_id.is_empty()
            || self
                .run_id
                .chars()
                .any(|c| !(c.is_ascii_alphanumeric() || "-_.^+".contains(c)))
        {
            return bad("run_id must be non-empty and use [A-Za-z0-9-_.^+]".into());
        }
        self.model.validate()?;
        self.optimizer.validate()?;
        self.schedule_config().validate()?;
        if let Some(c) = self.update.controller() {
            c.validate()?;
            if self.optimizer.weight_decay > 0.0 {
                return bad(format!(
                    "weight decay cannot be combined with the {} update rule",
                    self.update.label()
                ));
            }
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.monitor.eval_every == 0 {
            return bad("monitor.eval_every must be positive".into());
        }
        if let Some(&e) = self
            .monitor
            .probe_epochs
            .iter()
            .find(|&&e| e == 0 || e > self.epochs)
        {
            return bad(format!("probe epoch {e} outside 1..={}", self.epochs));
        }
        if !self.monitor.probe_epochs.is_empty() && !self.optimizer.kind.has_second_moment() {
            return bad(format!(
                "probe epochs need an optimizer with a second moment, not {}",
                self.optimizer.kind
            ));
        }
        if self.model.classes() != self.dataset.classes() {
            return bad(format!(
                "model has {} outputs but the dataset has {} classes",
                self.model.classes(),
                self.dataset.classes()
            ));
        }
        if let Some(g) = &self.grid {
            for &a in g.alphas.iter().chain([&g.anchor_alpha]) {
                if !(-1.0..=1.0).contains(&a) {
                    return bad(format!("grid alpha {a} outside [-1, 1]"));
                }
            }
            for &r in g.rates.iter().chain([&g.anchor_rate]) {
                if !(r >= 0.0 && r.is_finite()) {
                    return bad(format!("grid rate {r} must be finite and >= 0"));
                }
            }
        }
        Ok(())
    }

    /// One run per grid point, named after its rate and alpha.
    pub fn expand_grid(&self) -> Vec<RunConfig> {
        let grid = self.grid.clone().unwrap_or_default();
        grid.points()
            .into_iter()
            .map(|(rate, alpha)| {
                let mut cfg = self.clone();
                cfg.grid = None;
                cfg.schedule.initial_rate = rate;
                cfg.schedule.alpha = alpha;
                cfg.run_id = format!("{}_rho{}_alpha{:+.2}", self.run_id, rate_tag(rate), alpha);
                cfg
            })
            .collect()
    }
}

/// `3^-3` style tag when the rate is an integer power of three.
pub fn rate_tag(rate: f64) -> String {
    if rate > 0.0 {
        let e = rate.log(3.0);
        if (e - e.round()).abs() < 1e-9 {
            return format!("3^{}", e.round() as i64);
        }
    }
    format!("{rate:e}")
}

/// Replay input: per-step rates recorded from a source run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayFile {
    pub source_run_id: String,
    pub source_optimizer: layerspin_core::OptimizerKind,
    pub source_beta1: f64,
    pub steps_per_epoch: usize,
    pub schedule: layerspin_core::ReplaySchedule,
}

impl ReplayFile {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }
}

/// Output root: explicit flag, else `LAYERSPIN_OUT`, else `runs`.
pub fn output_root(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("LAYERSPIN_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}
