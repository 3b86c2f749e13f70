//! Summary table over the manifests found under a directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{HarnessError, Result};
use crate::export::{RunManifest, RunStatus, MANIFEST_FILE};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub run_id: String,
    pub status: String,
    pub optimizer: String,
    pub update: String,
    pub initial_rate: f64,
    pub alpha: f64,
    pub epochs: usize,
    pub final_train_accuracy: Option<f64>,
    pub final_test_accuracy: Option<f64>,
    pub mean_final_cosine_distance: Option<f64>,
}

pub const REPORT_CSV_HEADER: &str = "run_id,status,optimizer,update,initial_rate,alpha,epochs,final_train_accuracy,final_test_accuracy,mean_final_cosine_distance";

fn find_manifests(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)
        .map_err(|e| HarnessError::io(dir, e))?
        .collect::<std::io::Result<_>>()
        .map_err(|e| HarnessError::io(dir, e))?;
    entries.sort_by_key(|e| e.path());
    for entry in entries {
        let path = entry.path();
        if path.is_dir() {
            find_manifests(&path, out)?;
        } else if path.file_name().is_some_and(|n| n == MANIFEST_FILE) {
            out.push(path);
        }
    }
    Ok(())
}

/// One row per manifest below `dir`, sorted by run id.
pub fn collect(dir: &Path) -> Result<Vec<ReportRow>> {
    let mut paths = Vec::new();
    find_manifests(dir, &mut paths)?;
    let mut rows = paths
        .iter()
        .map(|p| RunManifest::from_file(p).map(|m| row(&m)))
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    Ok(rows)
}

fn row(m: &RunManifest) -> ReportRow {
    ReportRow {
        run_id: m.run_id.clone(),
        status: match m.status {
            RunStatus::Completed => "completed".into(),
            RunStatus::Diverged { .. } => "diverged".into(),
        },
        optimizer: m.config.optimizer.kind.to_string(),
        update: m.config.update.label().into(),
        initial_rate: m.config.schedule.initial_rate,
        alpha: m.config.schedule.alpha,
        epochs: m.epochs,
        final_train_accuracy: m.final_train_accuracy,
        final_test_accuracy: m.final_test_accuracy,
        mean_final_cosine_distance: m.mean_final_cosine_distance,
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

pub fn to_csv(rows: &[ReportRow]) -> String {
    let mut out = format!("{REPORT_CSV_HEADER}\n");
    for r in rows {
        let o = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.run_id,
            r.status,
            r.optimizer,
            r.update,
            r.initial_rate,
            r.alpha,
            r.epochs,
            o(r.final_train_accuracy),
            o(r.final_test_accuracy),
            o(r.mean_final_cosine_distance)
        );
    }
    out
}

/// Aligned plain-text table of test accuracy against final rotation.
pub fn to_table(rows: &[ReportRow]) -> String {
    let width = rows
        .iter()
        .map(|r| r.run_id.len())
        .max()
        .unwrap_or(6)
        .max(6);
    let mut out = format!(
        "{:<width$}  {:<9}  {:<8}  {:<5}  {:>10}  {:>6}  {:>7}  {:>7}  {:>8}\n",
        "run_id", "status", "opt", "rule", "rate", "alpha", "train", "test", "cos_dist"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:<9}  {:<8}  {:<5}  {:>10.3e}  {:>6.2}  {:>7}  {:>7}  {:>8}",
            r.run_id,
            r.status,
            r.optimizer,
            r.update,
            r.initial_rate,
            r.alpha,
            cell(r.final_train_accuracy),
            cell(r.final_test_accuracy),
            cell(r.mean_final_cosine_distance)
        );
    }
    out
}
