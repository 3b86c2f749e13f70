//! Runs configurations end to end: load data, train, write outputs.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde_json::Value;

use crate::config::{ReplayFile, RunConfig};
use crate::data::DataSplit;
use crate::error::{HarnessError, Result};
use crate::export::{write_diverged, write_run, RunManifest};
use crate::runner::train;

/// Command-line overrides applied on top of a config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(e) = self.epochs {
            // a shorter run follows the prefix of the same schedule
            cfg.epochs = e;
            cfg.schedule.decay.retain(|d| d.epoch < e);
            cfg.monitor.probe_epochs.retain(|&p| p <= e);
        }
        if let Some(b) = self.batch_size {
            cfg.batch_size = b;
        }
    }
}

/// A run to execute: a config plus the replay it follows, if any.
#[derive(Debug, Clone)]
pub struct RunInput {
    pub config: RunConfig,
    pub replay: Option<(ReplayFile, PathBuf)>,
}

/// Accepts either a run config or a manifest written by an earlier run.
pub fn load_run_input(path: &Path) -> Result<RunInput> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    if value.get("files").is_some() && value.get("config").is_some() {
        let manifest: RunManifest = serde_json::from_value(value)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let replay = manifest
            .replay_file
            .map(|p| ReplayFile::from_file(&p).map(|r| (r, p)))
            .transpose()?;
        return Ok(RunInput {
            config: manifest.config,
            replay,
        });
    }
    Ok(RunInput {
        config: RunConfig::from_file(path)?,
        replay: None,
    })
}

/// Trains and writes outputs under `dir`. A divergence is a result, not an
/// error: its manifest records where the run stopped.
pub fn execute(
    cfg: &RunConfig,
    data: &DataSplit,
    dir: &Path,
    replay: Option<(&ReplayFile, &Path)>,
) -> Result<RunManifest> {
    match train(cfg, data, replay.map(|r| r.0)) {
        Ok(outcome) => write_run(&outcome, dir, data.train.image_dims, replay.map(|r| r.1)),
        Err(e @ HarnessError::Diverged { .. }) => write_diverged(cfg, &e, dir),
        Err(e) => Err(e),
    }
}

pub fn execute_input(input: &RunInput, out_root: &Path) -> Result<RunManifest> {
    input.config.validate()?;
    let data = input.config.dataset.load()?;
    let dir = out_root.join(&input.config.run_id);
    execute(
        &input.config,
        &data,
        &dir,
        input.replay.as_ref().map(|(r, p)| (r, p.as_path())),
    )
}

/// Runs every grid point, `jobs` at a time, each into `out_root/<run_id>`.
/// Manifests come back in grid order.
pub fn run_grid(cfg: &RunConfig, out_root: &Path, jobs: usize) -> Result<Vec<RunManifest>> {
    cfg.validate()?;
    let points = cfg.expand_grid();
    for p in &points {
        p.validate()?;
    }
    let data = cfg.dataset.load()?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunManifest>>>> =
        Mutex::new((0..points.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, points.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(point) = points.get(i) else { break };
                let r = execute(point, &data, &out_root.join(&point.run_id), None);
                results.lock().expect("result lock")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("result lock")
        .into_iter()
        .map(|r| r.expect("every grid point ran"))
        .collect()
}
