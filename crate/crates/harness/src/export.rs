//! Run outputs: CSV tables, feature images, SVG chart and the manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use layerspin_core::optim::write_moment_probes_csv;
use layerspin_core::rotation::{write_angles_csv, write_curves_csv};
use layerspin_core::{Mlp, RotationRecord};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{HarnessError, Result};
use crate::runner::{EpochMetrics, RunOutcome};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_CSV_HEADER: &str =
    "run_id,epoch,global_rate,train_loss,train_accuracy,test_accuracy,mean_cosine_distance,skipped_updates";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmittedFile {
    /// Relative to the run directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Diverged {
        epoch: usize,
        step: usize,
        last_good_epoch: usize,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config: RunConfig,
    pub seed: u64,
    pub batch_size: usize,
    pub epochs: usize,
    pub output_dir: PathBuf,
    pub status: RunStatus,
    /// Replay file this run followed, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay_file: Option<PathBuf>,
    pub steps_per_epoch: usize,
    pub final_train_accuracy: Option<f64>,
    /// Final test accuracy (eta).
    pub final_test_accuracy: Option<f64>,
    pub mean_final_cosine_distance: Option<f64>,
    pub final_cosine_distances: Vec<f64>,
    pub skipped_updates: usize,
    pub files: Vec<EmittedFile>,
}

impl RunManifest {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }

    pub fn digest_of(&self, path: &str) -> Option<&str> {
        self.files
            .iter()
            .find(|f| f.path == path)
            .map(|f| f.sha256.as_str())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Emitter<'a> {
    dir: &'a Path,
    files: Vec<EmittedFile>,
}

impl Emitter<'_> {
    fn emit(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| HarnessError::io(&path, e))?;
        self.files.push(EmittedFile {
            path: rel.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn metrics_csv(run_id: &str, metrics: &[EpochMetrics]) -> String {
    let mut out = format!("{METRICS_CSV_HEADER}\n");
    for m in metrics {
        let _ = writeln!(
            out,
            "{run_id},{},{},{},{},{},{},{}",
            m.epoch,
            m.global_rate,
            m.train_loss,
            opt(m.train_accuracy),
            opt(m.test_accuracy),
            m.mean_cosine_distance,
            m.skipped_updates
        );
    }
    out
}

/// Symmetric scaling around zero: `v -> 127.5 * (1 + v / max|v|)`, so zero
/// maps to mid-gray and an all-zero vector to a uniform 128.
pub fn feature_pixels(values: &[f64]) -> Vec<u8> {
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    values
        .iter()
        .map(|&v| {
            let unit = if peak > 0.0 { v / peak } else { 0.0 };
            (127.5 * (1.0 + unit)).round().clamp(0.0, 255.0) as u8
        })
        .collect()
}

/// Binary PGM (P5, maxval 255).
pub fn encode_pgm(rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureExport {
    pub layer_index: usize,
    pub image_dims: Option<(usize, usize)>,
    pub neurons: Vec<NeuronFeature>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronFeature {
    pub neuron: usize,
    pub initial: Vec<f64>,
    #[serde(rename = "final")]
    pub current: Vec<f64>,
}

/// Incoming weight vectors of the first `count` neurons of layer 0.
pub fn export_features(
    model: &Mlp,
    count: usize,
    image_dims: Option<(usize, usize)>,
) -> Result<FeatureExport> {
    let snap = model.snapshot_features(0)?;
    let count = count.min(snap.current.rows());
    let image_dims = image_dims.filter(|(r, c)| r * c == snap.current.cols());
    Ok(FeatureExport {
        layer_index: 0,
        image_dims,
        neurons: (0..count)
            .map(|i| NeuronFeature {
                neuron: i,
                initial: snap.initial.row(i).to_vec(),
                current: snap.current.row(i).to_vec(),
            })
            .collect(),
    })
}

/// Dark blue for the first layer through to orange for the last.
pub fn depth_color(layer: usize, layer_count: usize) -> String {
    let t = if layer_count > 1 {
        layer as f64 / (layer_count - 1) as f64
    } else {
        0.0
    };
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        lerp(30.0, 240.0),
        lerp(40.0, 130.0),
        lerp(140.0, 20.0)
    )
}

/// Line chart of the layer rotation curves.
pub fn curves_svg(record: &RotationRecord, title: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const LEFT: f64 = 60.0;
    const RIGHT: f64 = 20.0;
    const TOP: f64 = 30.0;
    const BOTTOM: f64 = 45.0;
    let max_epoch = record
        .layers
        .iter()
        .flat_map(|l| l.curve.iter().map(|p| p.epoch))
        .max()
        .unwrap_or(0)
        .max(1) as f64;
    let max_d = record
        .layers
        .iter()
        .flat_map(|l| l.curve.iter().map(|p| p.cosine_distance))
        .fold(0.0f64, f64::max);
    let y_top = if max_d > 0.0 { 1.05 * max_d } else { 1.0 };
    let px = |e: f64| LEFT + e / max_epoch * (W - LEFT - RIGHT);
    let py = |d: f64| H - BOTTOM - d / y_top * (H - TOP - BOTTOM);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let (x0, x1, y0, y1) = (px(0.0), px(max_epoch), py(0.0), py(y_top));
    let _ = writeln!(
        s,
        r#"<path d="M{x0:.2},{y1:.2} L{x0:.2},{y0:.2} L{x1:.2},{y0:.2}" fill="none" stroke="black"/>"#
    );
    for i in 0..=5 {
        let d = y_top * i as f64 / 5.0;
        let y = py(d);
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{x0:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{d:.2}</text>"#,
            x0 - 4.0,
            x0 - 6.0,
            y + 4.0
        );
        let e = max_epoch * i as f64 / 5.0;
        let x = px(e);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{e:.0}</text>"#,
            y0 + 4.0,
            y0 + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">epoch</text>"#,
        (x0 + x1) / 2.0,
        H - 8.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">cosine distance</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    let n = record.layers.len();
    for (l, layer) in record.layers.iter().enumerate() {
        let color = depth_color(l, n);
        let pts: Vec<String> = layer
            .curve
            .iter()
            .map(|p| format!("{:.2},{:.2}", px(p.epoch as f64), py(p.cosine_distance)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"><title>{}</title></polyline>"#,
            pts.join(" "),
            escape(&layer.name)
        );
        let ly = TOP + 14.0 * l as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            x1 - 90.0,
            x1 - 70.0,
            x1 - 65.0,
            ly + 4.0,
            escape(&layer.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Writes every output of a finished run into `dir` and returns its manifest.
pub fn write_run(
    outcome: &RunOutcome,
    dir: &Path,
    image_dims: Option<(usize, usize)>,
    replay_file: Option<&Path>,
) -> Result<RunManifest> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let cfg = &outcome.config;
    let mut em = Emitter {
        dir,
        files: Vec::new(),
    };
    let io = |e: std::io::Error| HarnessError::io(dir, e);

    let mut buf = Vec::new();
    write_curves_csv(&outcome.record, &cfg.run_id, &mut buf).map_err(io)?;
    em.emit("curves.csv", &buf)?;
    if cfg.monitor.step_angles {
        buf.clear();
        write_angles_csv(&outcome.record, &cfg.run_id, &mut buf).map_err(io)?;
        em.emit("angles.csv", &buf)?;
        // Angles of a raw run can exceed pi/2, in which case no replay exists.
        if let Ok(replay) = outcome.replay_file() {
            em.emit("replay.json", serde_json::to_string(&replay)?.as_bytes())?;
        }
    }
    em.emit(
        "metrics.csv",
        metrics_csv(&cfg.run_id, &outcome.metrics).as_bytes(),
    )?;
    if !outcome.probes.is_empty() {
        buf.clear();
        write_moment_probes_csv(&outcome.probes, &mut buf).map_err(io)?;
        em.emit("probe.csv", &buf)?;
    }
    if cfg.monitor.feature_neurons > 0 {
        let features = export_features(&outcome.model, cfg.monitor.feature_neurons, image_dims)?;
        em.emit(
            "features.json",
            serde_json::to_string(&features)?.as_bytes(),
        )?;
        if let Some((rows, cols)) = features.image_dims {
            for n in &features.neurons {
                for (tag, v) in [("initial", &n.initial), ("final", &n.current)] {
                    em.emit(
                        &format!("features/neuron_{:04}_{tag}.pgm", n.neuron),
                        &encode_pgm(rows, cols, &feature_pixels(v)),
                    )?;
                }
            }
        }
    }
    em.emit(
        "curves.svg",
        curves_svg(&outcome.record, &cfg.run_id).as_bytes(),
    )?;

    let last = outcome.final_metrics();
    let manifest = RunManifest {
        run_id: cfg.run_id.clone(),
        config: cfg.clone(),
        seed: cfg.seed,
        batch_size: cfg.batch_size,
        epochs: cfg.epochs,
        output_dir: dir.to_path_buf(),
        status: RunStatus::Completed,
        replay_file: replay_file.map(Path::to_path_buf),
        steps_per_epoch: outcome.steps_per_epoch,
        final_train_accuracy: last.train_accuracy,
        final_test_accuracy: last.test_accuracy,
        mean_final_cosine_distance: outcome.record.mean_final_distance(),
        final_cosine_distances: outcome.record.final_distances(),
        skipped_updates: outcome.skipped_updates(),
        files: em.files,
    };
    write_manifest(&manifest, dir)?;
    Ok(manifest)
}

/// Manifest for a run that stopped on a non-finite value.
pub fn write_diverged(cfg: &RunConfig, err: &HarnessError, dir: &Path) -> Result<RunManifest> {
    let HarnessError::Diverged {
        epoch,
        step,
        last_good_epoch,
        reason,
        ..
    } = err
    else {
        return Err(HarnessError::Config(format!("not a divergence: {err}")));
    };
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let manifest = RunManifest {
        run_id: cfg.run_id.clone(),
        config: cfg.clone(),
        seed: cfg.seed,
        batch_size: cfg.batch_size,
        epochs: cfg.epochs,
        output_dir: dir.to_path_buf(),
        status: RunStatus::Diverged {
            epoch: *epoch,
            step: *step,
            last_good_epoch: *last_good_epoch,
            reason: reason.clone(),
        },
        replay_file: None,
        steps_per_epoch: 0,
        final_train_accuracy: None,
        final_test_accuracy: None,
        mean_final_cosine_distance: None,
        final_cosine_distances: Vec::new(),
        skipped_updates: 0,
        files: Vec::new(),
    };
    write_manifest(&manifest, dir)?;
    Ok(manifest)
}

fn write_manifest(manifest: &RunManifest, dir: &Path) -> Result<()> {
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(manifest)?;
    fs::write(&path, text + "\n").map_err(|e| HarnessError::io(&path, e))
}
