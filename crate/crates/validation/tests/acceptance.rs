//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! Criteria 3-9 train on reduced MNIST, looked up in `$LAYERSPIN_MNIST_DIR`
//! or `<workspace>/data/mnist` (see `scripts/fetch_mnist.sh`).
//!
//! Filter with substrings: `cargo test --test acceptance -- c3 c7`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use layerspin_core::layca::{layca_transform, project_orthogonal, Transformed};
use layerspin_core::optim::MomentProbe;
use layerspin_core::schedules::{standard_grid, DecayStep};
use layerspin_core::tensor::{dot, l2_norm, Dense};
use layerspin_core::{
    Activation, LayerState, Mlp, ModelSpec, OptimizerConfig, OptimizerKind, SeededRng,
};
use layerspin_harness::export::{write_run, RunManifest};
use layerspin_harness::pipeline::{execute_input, load_run_input};
use layerspin_harness::{
    replay_config, train, DataSplit, DatasetSpec, HarnessError, MonitorConfig, RunConfig,
    RunOutcome, ScheduleSpec, UpdateRule,
};

// ---- shared setup ---------------------------------------------------------

fn mnist_dir() -> PathBuf {
    std::env::var_os("LAYERSPIN_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

fn mnist_spec() -> DatasetSpec {
    DatasetSpec::MnistIdx {
        dir: mnist_dir(),
        per_class_cap: Some(1000),
    }
}

fn mnist() -> &'static DataSplit {
    static DATA: OnceLock<DataSplit> = OnceLock::new();
    DATA.get_or_init(|| {
        mnist_spec().load().unwrap_or_else(|e| {
            panic!(
                "reduced MNIST unavailable ({e}); run scripts/fetch_mnist.sh or set LAYERSPIN_MNIST_DIR"
            )
        })
    })
}

fn out_root() -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

const SEED: u64 = 1;

fn mlp_run(
    run_id: &str,
    widths: &[usize],
    optimizer: OptimizerConfig,
    update: UpdateRule,
    schedule: ScheduleSpec,
    epochs: usize,
) -> RunConfig {
    RunConfig {
        run_id: run_id.into(),
        model: ModelSpec::new(widths.to_vec(), Activation::Relu),
        optimizer,
        update,
        schedule,
        dataset: mnist_spec(),
        batch_size: 128,
        epochs,
        seed: SEED,
        monitor: MonitorConfig::default(),
        grid: None,
    }
}

type Trained = std::result::Result<Arc<RunOutcome>, String>;

/// Trains each distinct config once; outputs land in the target tmp dir.
fn trained(cfg: &RunConfig) -> Trained {
    static CACHE: OnceLock<Mutex<HashMap<String, Trained>>> = OnceLock::new();
    let key = serde_json::to_string(cfg).unwrap();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(hit) = cache.lock().unwrap().get(&key) {
        return hit.clone();
    }
    let t = Instant::now();
    let result = match train(cfg, mnist(), None) {
        Ok(outcome) => {
            write_run(
                &outcome,
                &out_root().join(&cfg.run_id),
                mnist().train.image_dims,
                None,
            )
            .unwrap();
            Ok(Arc::new(outcome))
        }
        Err(e @ HarnessError::Diverged { .. }) => Err(e.to_string()),
        Err(e) => panic!("{}: {e}", cfg.run_id),
    };
    eprintln!("    trained {} in {:.0?}", cfg.run_id, t.elapsed());
    cache.lock().unwrap().insert(key, result.clone());
    result
}

fn must(cfg: &RunConfig) -> Arc<RunOutcome> {
    trained(cfg).unwrap_or_else(|e| panic!("{e}"))
}

fn final_test(o: &RunOutcome) -> f64 {
    o.final_metrics()
        .test_accuracy
        .expect("final epoch is evaluated")
}

fn final_train(o: &RunOutcome) -> f64 {
    o.final_metrics()
        .train_accuracy
        .expect("final epoch is evaluated")
}

fn mean_distance(o: &RunOutcome) -> f64 {
    o.record.mean_final_distance().unwrap()
}

/// Spearman correlation with average ranks for ties.
fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

// ---- criterion 1: update geometry -----------------------------------------

fn c1_update_geometry() -> (bool, String) {
    let mut rng = SeededRng::new(2024);
    let (mut worst_angle, mut worst_norm, mut worst_orth) = (0.0f64, 0.0f64, 0.0f64);
    let mut checked = 0;
    for &rate in &standard_grid() {
        for &dim in &[2usize, 10, 10_000] {
            for _ in 0..100 {
                let w: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
                let s: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
                let w0_norm = l2_norm(&w) * rng.uniform(0.5, 2.0);
                let Transformed::Updated(w2) = layca_transform(&w, w0_norm, &s, rate).unwrap()
                else {
                    continue;
                };
                // Oracle: angle from the components of w2 along and across w.
                let wn = l2_norm(&w);
                let along = dot(&w2, &w).unwrap() / wn;
                let across = (dot(&w2, &w2).unwrap() - along * along).max(0.0).sqrt();
                let angle = across.atan2(along);
                worst_angle = worst_angle.max((angle - rate.atan()).abs());
                worst_norm = worst_norm.max((l2_norm(&w2) - w0_norm).abs() / w0_norm);
                let p = project_orthogonal(&w, &s).unwrap();
                let residual = dot(&p, &w).unwrap().abs() / (l2_norm(&p) * wn);
                worst_orth = worst_orth.max(residual);
                checked += 1;
            }
        }
    }
    let pass = checked == 3000 && worst_angle <= 1e-6 && worst_norm <= 1e-9 && worst_orth <= 1e-9;
    (
        pass,
        format!(
            "{checked} pairs; max |angle - atan(rate)| = {worst_angle:.2e} (<= 1e-6), max norm error = {worst_norm:.2e} (<= 1e-9), max orthogonality residual = {worst_orth:.2e} (<= 1e-9)"
        ),
    )
}

// ---- criterion 2: gradient oracle -----------------------------------------

fn random_model(rng: &mut SeededRng) -> (Mlp, Dense, Vec<usize>) {
    let depth = 2 + rng.below(3);
    let widths: Vec<usize> = (0..=depth).map(|_| 2 + rng.below(7)).collect();
    let activation = if rng.below(2) == 0 {
        Activation::Relu
    } else {
        Activation::Tanh
    };
    let spec = ModelSpec::new(widths.clone(), activation);
    let layers = (0..depth)
        .map(|l| {
            let w: Vec<f64> = (0..widths[l] * widths[l + 1])
                .map(|_| rng.normal() * 0.7)
                .collect();
            let b: Vec<f64> = (0..widths[l + 1]).map(|_| rng.normal() * 0.3).collect();
            LayerState::new(
                Dense::matrix(widths[l], widths[l + 1], w).unwrap(),
                Dense::vector(b),
                l,
                depth,
            )
            .unwrap()
        })
        .collect();
    let batch = 1 + rng.below(4);
    let x: Vec<f64> = (0..batch * widths[0]).map(|_| rng.normal()).collect();
    let y: Vec<usize> = (0..batch).map(|_| rng.below(widths[depth])).collect();
    (
        Mlp::from_layers(spec, layers).unwrap(),
        Dense::matrix(batch, widths[0], x).unwrap(),
        y,
    )
}

fn c2_gradient_oracle() -> (bool, String) {
    const EPS: f64 = 1e-5;
    let mut rng = SeededRng::new(77);
    let (mut worst, mut coords, mut models) = (0.0f64, 0usize, 0usize);
    while models < 25 {
        let (mut model, x, y) = random_model(&mut rng);
        let (_, grads) = model.loss_and_grad(&x, &y).unwrap();
        for l in 0..model.layer_count() {
            for which in 0..2 {
                let n = if which == 0 {
                    model.layers()[l].weights.len()
                } else {
                    model.layers()[l].bias.len()
                };
                for i in 0..n {
                    let probe = |m: &mut Mlp, delta: f64| {
                        let layer = &mut m.layers_mut()[l];
                        let buf = if which == 0 {
                            layer.weights.as_mut_slice()
                        } else {
                            layer.bias.as_mut_slice()
                        };
                        buf[i] += delta;
                    };
                    probe(&mut model, EPS);
                    let up = model.loss(&x, &y).unwrap();
                    probe(&mut model, -2.0 * EPS);
                    let down = model.loss(&x, &y).unwrap();
                    probe(&mut model, EPS);
                    let numeric = (up - down) / (2.0 * EPS);
                    let g = &grads.layers[l];
                    let analytic = if which == 0 {
                        g.weights.as_slice()[i]
                    } else {
                        g.bias.as_slice()[i]
                    };
                    if analytic.abs() > 1e-8 {
                        worst = worst.max((analytic - numeric).abs() / analytic.abs());
                        coords += 1;
                    }
                }
            }
        }
        models += 1;
    }
    (
        worst <= 1e-4,
        format!("{models} models, {coords} coordinates; max relative error {worst:.2e} (<= 1e-4)"),
    )
}

// ---- criterion 3: rule of thumb -------------------------------------------

const C3_RATES: [i32; 4] = [-5, -4, -3, -2];
const C3_EPOCHS: usize = 60;

fn c3_schedule(rate: f64) -> ScheduleSpec {
    ScheduleSpec {
        initial_rate: rate,
        alpha: 0.0,
        // divide by 5 at 80%, 90% and 97% of training
        decay: vec![
            DecayStep {
                epoch: 48,
                factor: 5.0,
            },
            DecayStep {
                epoch: 54,
                factor: 5.0,
            },
            DecayStep {
                epoch: 58,
                factor: 5.0,
            },
        ],
        warmup_epochs: 0,
    }
}

fn c3_config(exp: i32) -> RunConfig {
    let mut cfg = mlp_run(
        &format!("c3-layca-rho3^{exp}"),
        &[784, 784, 10],
        OptimizerConfig::sgd(),
        UpdateRule::Layca,
        c3_schedule(3f64.powi(exp)),
        C3_EPOCHS,
    );
    cfg.monitor.step_angles = false;
    cfg.monitor.eval_every = 10;
    cfg
}

fn c3_rule_of_thumb() -> (bool, String) {
    let runs: Vec<Arc<RunOutcome>> = C3_RATES.iter().map(|&e| must(&c3_config(e))).collect();
    let train: Vec<f64> = runs.iter().map(|o| final_train(o)).collect();
    let test: Vec<f64> = runs.iter().map(|o| final_test(o)).collect();
    let dist: Vec<f64> = runs.iter().map(|o| mean_distance(o)).collect();
    let rho = spearman(&dist, &test);
    let best = (0..4).max_by(|&a, &b| test[a].total_cmp(&test[b])).unwrap();
    let worst = (0..4).min_by(|&a, &b| test[a].total_cmp(&test[b])).unwrap();
    let a = train.iter().all(|&t| t >= 0.99);
    let b = rho == 1.0;
    let c = dist[best] >= 0.8 && dist[worst] <= 0.3;
    let rows: Vec<String> = (0..4)
        .map(|i| {
            format!(
                "3^{}: train {:.4} test {:.4} dist {:.3}",
                C3_RATES[i], train[i], test[i], dist[i]
            )
        })
        .collect();
    (
        a && b && c,
        format!(
            "[{}]; (a) all train >= 0.99: {a}; (b) spearman = {rho:.3} (== 1): {b}; (c) best dist {:.3} >= 0.8 and worst dist {:.3} <= 0.3: {c}",
            rows.join("; "),
            dist[best],
            dist[worst]
        ),
    )
}

// ---- criterion 4: weight decay --------------------------------------------

const C4_EPOCHS: usize = 20;
const C4_WEIGHT_DECAY: f64 = 1e-3;

fn c4_config(rate: f64, weight_decay: f64) -> RunConfig {
    let tag = if weight_decay > 0.0 { "-wd" } else { "" };
    let mut cfg = mlp_run(
        &format!(
            "c4-sgd{tag}-rho{}",
            layerspin_harness::config::rate_tag(rate)
        ),
        &[784, 784, 10],
        OptimizerConfig::sgd().with_weight_decay(weight_decay),
        UpdateRule::Raw,
        ScheduleSpec::constant(rate),
        C4_EPOCHS,
    );
    cfg.monitor.step_angles = false;
    cfg.monitor.eval_every = C4_EPOCHS;
    cfg.monitor.feature_neurons = 0;
    cfg
}

fn c4_weight_decay() -> (bool, String) {
    let mut best: Option<(f64, Arc<RunOutcome>)> = None;
    let mut grid = Vec::new();
    for rate in standard_grid() {
        match trained(&c4_config(rate, 0.0)) {
            Ok(o) => {
                grid.push(format!(
                    "{}:{:.4}",
                    layerspin_harness::config::rate_tag(rate),
                    final_test(&o)
                ));
                if best
                    .as_ref()
                    .is_none_or(|(_, b)| final_test(&o) > final_test(b))
                {
                    best = Some((rate, o));
                }
            }
            Err(_) => grid.push(format!(
                "{}:diverged",
                layerspin_harness::config::rate_tag(rate)
            )),
        }
    }
    let Some((rate, plain)) = best else {
        return (false, "every grid run diverged".into());
    };
    let decayed = match trained(&c4_config(rate, C4_WEIGHT_DECAY)) {
        Ok(o) => o,
        Err(e) => return (false, format!("weight-decay run failed: {e}")),
    };
    let (dp, dw) = (mean_distance(&plain), mean_distance(&decayed));
    (
        dw - dp >= 0.1,
        format!(
            "grid test acc [{}]; best rate {}: plain dist {dp:.3} (test {:.4}), with weight decay {C4_WEIGHT_DECAY} dist {dw:.3} (test {:.4}); gain {:.3} (>= 0.1)",
            grid.join(" "),
            layerspin_harness::config::rate_tag(rate),
            final_test(&plain),
            final_test(&decayed),
            dw - dp
        ),
    )
}

// ---- criterion 5: second-moment spread ------------------------------------

const C5_RATE: f64 = 1e-3;

fn c5_config() -> RunConfig {
    let mut cfg = mlp_run(
        "c5-adam-probe",
        &[784, 256, 256, 10],
        OptimizerConfig::new(OptimizerKind::Adam),
        UpdateRule::Raw,
        ScheduleSpec::constant(C5_RATE),
        10,
    );
    cfg.monitor.probe_epochs = vec![1, 10];
    cfg
}

fn spread(p: &MomentProbe) -> (f64, f64) {
    let p50: Vec<f64> = p.layers.iter().map(|l| l.p50).collect();
    let across =
        p50.iter().cloned().fold(f64::MIN, f64::max) / p50.iter().cloned().fold(f64::MAX, f64::min);
    let mut within: Vec<f64> = p
        .layers
        .iter()
        .map(|l| {
            if l.p10 > 0.0 {
                l.p90 / l.p10
            } else {
                f64::INFINITY
            }
        })
        .collect();
    within.sort_by(f64::total_cmp);
    let n = within.len();
    let median = if n % 2 == 1 {
        within[n / 2]
    } else {
        (within[n / 2 - 1] + within[n / 2]) / 2.0
    };
    (across, median)
}

fn c5_moment_spread() -> (bool, String) {
    let o = must(&c5_config());
    let mut pass = o.probes.len() == 2;
    let mut parts = Vec::new();
    for p in &o.probes {
        let (across, within) = spread(p);
        let ok = across >= 10.0 * within;
        pass &= ok;
        parts.push(format!(
            "epoch {}: max/min p50 = {across:.3e}, median p90/p10 = {within:.3e}, ratio {:.1} (>= 10)",
            p.epoch,
            across / within
        ));
    }
    (pass, parts.join("; "))
}

// ---- criterion 6: AdaptCopy fidelity --------------------------------------

const C6_EPOCHS: usize = 15;
const C6_RATE: f64 = 1e-3;

fn c6_adapt_copy() -> (bool, String) {
    let source_cfg = mlp_run(
        "c6-adam",
        &[784, 784, 10],
        OptimizerConfig::new(OptimizerKind::Adam),
        UpdateRule::Raw,
        ScheduleSpec::constant(C6_RATE),
        C6_EPOCHS,
    );
    let source = must(&source_cfg);
    let replay = source.replay_file().unwrap();
    let copy_cfg = replay_config(&source_cfg, &replay);
    let copy = train(&copy_cfg, mnist(), Some(&replay)).unwrap();
    write_run(
        &copy,
        &out_root().join(&copy_cfg.run_id),
        mnist().train.image_dims,
        None,
    )
    .unwrap();

    let mut worst_angle = 0.0f64;
    let mut compared = 0usize;
    for (a, b) in source.record.layers.iter().zip(&copy.record.layers) {
        for (x, y) in a.angles.iter().zip(&b.angles) {
            if !y.skipped {
                worst_angle = worst_angle.max((x.theta - y.theta).abs());
                compared += 1;
            }
        }
    }
    let gaps: Vec<f64> = source
        .metrics
        .iter()
        .zip(&copy.metrics)
        .map(|(a, b)| (a.train_accuracy.unwrap() - b.train_accuracy.unwrap()).abs() * 100.0)
        .collect();
    let worst_gap = gaps.iter().cloned().fold(0.0, f64::max);
    let pass = compared > 0 && worst_angle <= 1e-6 && worst_gap <= 2.0;
    (
        pass,
        format!(
            "{compared} replayed steps, max angle error {worst_angle:.2e} (<= 1e-6); per-epoch train acc gap (points) {:?}, max {worst_gap:.2} (<= 2); final train {:.4} vs {:.4}",
            gaps.iter().map(|g| (g * 100.0).round() / 100.0).collect::<Vec<_>>(),
            final_train(&source),
            final_train(&copy)
        ),
    )
}

// ---- criterion 7: LARS vs Layca -------------------------------------------

fn c7_lars_vs_layca() -> (bool, String) {
    let layca = must(&c3_config(-3));
    let mut cfg = c3_config(-3);
    cfg.run_id = "c7-lars-rho3^-3".into();
    cfg.update = UpdateRule::Lars {
        norm_growth_cap: layerspin_core::layca::DEFAULT_LARS_NORM_GROWTH_CAP,
    };
    let lars = must(&cfg);
    let (dl, dr) = (
        layca.record.final_distances(),
        lars.record.final_distances(),
    );
    let worst = dl
        .iter()
        .zip(&dr)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let acc_gap = (final_test(&layca) - final_test(&lars)).abs() * 100.0;
    (
        worst <= 0.1 && acc_gap <= 1.5,
        format!(
            "layca dists {dl:.3?}, lars dists {dr:.3?}: max gap {worst:.3} (<= 0.1); test {:.4} vs {:.4}: gap {acc_gap:.2} points (<= 1.5)",
            final_test(&layca),
            final_test(&lars)
        ),
    )
}

// ---- criterion 8: warmup stability ----------------------------------------

const C8_RATE: f64 = 3.0;
const C8_ANGLE: f64 = 0.5;

fn c8_config(id: &str, update: UpdateRule, rate: f64, warmup: usize) -> RunConfig {
    let mut cfg = mlp_run(
        id,
        &[784, 784, 10],
        OptimizerConfig::sgd(),
        update,
        ScheduleSpec {
            warmup_epochs: warmup,
            ..ScheduleSpec::constant(rate)
        },
        1,
    );
    cfg.monitor.feature_neurons = 0;
    cfg
}

fn large_angles(o: &RunOutcome) -> usize {
    o.record
        .layers
        .iter()
        .flat_map(|l| &l.angles)
        .filter(|a| a.theta > C8_ANGLE)
        .count()
}

/// Layca's rate is matched to SGD's mean per-step rotation over epoch 1, so
/// both runs rotate by the same amount on average.
fn c8_warmup() -> (bool, String) {
    let plain = match trained(&c8_config("c8-sgd", UpdateRule::Raw, C8_RATE, 0)) {
        Ok(o) => o,
        Err(e) => return (false, e),
    };
    let warm = trained(&c8_config("c8-sgd-warmup5", UpdateRule::Raw, C8_RATE, 5))
        .map(|o| large_angles(&o));
    let angles: Vec<f64> = plain
        .record
        .layers
        .iter()
        .flat_map(|l| l.angles.iter().map(|a| a.theta))
        .collect();
    let mean_angle = angles.iter().sum::<f64>() / angles.len() as f64;
    let matched = mean_angle.tan();
    let layca = trained(&c8_config(
        "c8-layca-matched",
        UpdateRule::Layca,
        matched,
        0,
    ))
    .map(|o| large_angles(&o));
    let plain_count = large_angles(&plain);
    let detail = format!(
        "steps with angle > {C8_ANGLE} rad in epoch 1: sgd rate {C8_RATE}: {plain_count}, with 5-epoch warmup: {warm:?}; layca at matched rate {matched:.4} (mean sgd angle {mean_angle:.4} rad): {layca:?}"
    );
    let pass = matches!((warm, layca), (Ok(w), Ok(0)) if w < plain_count);
    (pass, detail)
}

// ---- criterion 9: determinism ---------------------------------------------

fn c9_determinism() -> (bool, String) {
    let cfg = c5_config();
    must(&cfg);
    let first = out_root().join(&cfg.run_id).join("manifest.json");
    let manifest = RunManifest::from_file(&first).unwrap();
    let input = load_run_input(&first).unwrap();
    let again = execute_input(&input, &out_root().join("c9-rerun")).unwrap();
    let csv = |m: &RunManifest| -> Vec<(String, String)> {
        m.files
            .iter()
            .filter(|f| f.path.ends_with(".csv"))
            .map(|f| (f.path.clone(), f.sha256.clone()))
            .collect()
    };
    let (a, b) = (csv(&manifest), csv(&again));
    (
        !a.is_empty() && a == b && manifest.files == again.files,
        format!(
            "re-ran {} from its manifest: {} CSV digests {}, all {} files {}",
            cfg.run_id,
            a.len(),
            if a == b { "identical" } else { "DIFFER" },
            manifest.files.len(),
            if manifest.files == again.files {
                "identical"
            } else {
                "DIFFER"
            }
        ),
    )
}

// ---- driver ----------------------------------------------------------------

type Criterion = (&'static str, &'static str, fn() -> (bool, String));

fn main() {
    let criteria: [Criterion; 9] = [
        ("c1", "update geometry", c1_update_geometry),
        ("c2", "gradient oracle", c2_gradient_oracle),
        ("c3", "rule of thumb (784-784-10 layca)", c3_rule_of_thumb),
        ("c4", "weight decay enables rotation", c4_weight_decay),
        ("c5", "second-moment spread (adam)", c5_moment_spread),
        ("c6", "adaptcopy fidelity", c6_adapt_copy),
        ("c7", "lars close to layca", c7_lars_vs_layca),
        ("c8", "warmup stability", c8_warmup),
        ("c9", "determinism", c9_determinism),
    ];
    let filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = Vec::new();
    let mut ran = 0;
    for (id, name, check) in criteria {
        if !filters.is_empty()
            && !filters
                .iter()
                .any(|f| id.contains(f.as_str()) || name.contains(f.as_str()))
        {
            continue;
        }
        ran += 1;
        let t = Instant::now();
        let (pass, detail) = match std::panic::catch_unwind(check) {
            Ok(r) => r,
            Err(p) => (
                false,
                format!(
                    "panicked: {}",
                    p.downcast_ref::<String>()
                        .cloned()
                        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                        .unwrap_or_default()
                ),
            ),
        };
        println!(
            "{} {id} {name} ({:.0?}): {detail}",
            if pass { "PASS" } else { "FAIL" },
            t.elapsed()
        );
        if !pass {
            failed.push(id);
        }
    }
    println!(
        "acceptance: {} of {ran} criteria passed",
        ran - failed.len()
    );
    if !failed.is_empty() {
        eprintln!("failed criteria: {}", failed.join(", "));
        std::process::exit(1);
    }
}
