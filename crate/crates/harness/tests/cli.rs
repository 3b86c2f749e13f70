use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_layerspin"));
    c.env_remove("LAYERSPIN_OUT");
    c
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn ok(out: Output) -> String {
    let stdout = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {stdout}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    stdout
}

fn small_grid(dir: &Path) -> PathBuf {
    let mut cfg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(config("blobs_quick.json")).unwrap())
            .unwrap();
    cfg["grid"] = serde_json::json!({"rates": [0.01, 0.1], "alphas": [-0.5, 0.5], "sweep": "axes", "anchor_rate": 0.05});
    let path = dir.join("grid.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

#[test]
fn run_writes_manifest_and_honours_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "run",
            config("blobs_quick.json").to_str().unwrap(),
            "--epochs",
            "3",
            "--seed",
            "9",
            "--batch-size",
            "16",
            "--out",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    ok(out);
    let m: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("blobs-layca/manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(m["epochs"], 3);
    assert_eq!(m["seed"], 9);
    assert_eq!(m["batch_size"], 16);
}

#[test]
fn env_var_sets_output_root() {
    let dir = tempfile::tempdir().unwrap();
    ok(bin()
        .args([
            "run",
            config("blobs_quick.json").to_str().unwrap(),
            "--epochs",
            "1",
        ])
        .env("LAYERSPIN_OUT", dir.path())
        .output()
        .unwrap());
    assert!(dir.path().join("blobs-layca/manifest.json").exists());
}

#[test]
fn bad_inputs_exit_nonzero_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let missing = bin()
        .args(["run", "/nonexistent/config.json"])
        .output()
        .unwrap();
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("error"));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"run_id": "x"}"#).unwrap();
    let out = bin().args(["run", bad.to_str().unwrap()]).output().unwrap();
    assert!(!out.status.success());

    let grid = small_grid(dir.path());
    let out = bin()
        .args(["run", grid.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid"));

    let empty = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["report", empty.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn grid_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let grid = small_grid(dir.path());
    let runs = dir.path().join("runs");
    ok(bin()
        .args([
            "grid",
            grid.to_str().unwrap(),
            "--epochs",
            "2",
            "--jobs",
            "2",
            "--out",
        ])
        .arg(&runs)
        .output()
        .unwrap());
    // rates at alpha 0 (2) + alphas at the anchor rate (2)
    let manifests: Vec<_> = std::fs::read_dir(&runs)
        .unwrap()
        .map(|e| e.unwrap().path().join("manifest.json"))
        .filter(|p| p.exists())
        .collect();
    assert_eq!(manifests.len(), 4);

    let stdout = ok(bin().args(["report"]).arg(&runs).output().unwrap());
    assert_eq!(stdout.lines().count(), 1 + 4);
    let csv = std::fs::read_to_string(runs.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
}

#[test]
fn replay_and_probe_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(config("blobs_quick.json")).unwrap())
            .unwrap();
    cfg["run_id"] = "adam".into();
    cfg["optimizer"] = serde_json::json!({"kind": "adam"});
    cfg["update"] = serde_json::json!({"rule": "raw"});
    cfg["schedule"] = serde_json::json!({"initial_rate": 0.001});
    let path = dir.path().join("adam.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let runs = dir.path().join("runs");

    let stdout = ok(bin()
        .args(["probe", path.to_str().unwrap(), "--epochs", "2", "--out"])
        .arg(&runs)
        .output()
        .unwrap());
    assert!(stdout.contains("p50"));
    assert!(runs.join("adam/probe.csv").exists());

    let recorded = runs.join("adam/replay.json");
    ok(bin()
        .args([
            "replay",
            path.to_str().unwrap(),
            recorded.to_str().unwrap(),
            "--epochs",
            "2",
            "--out",
        ])
        .arg(&runs)
        .output()
        .unwrap());
    let m: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(runs.join("adam-adaptcopy/manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(m["config"]["optimizer"]["kind"], "sgd_amom");
    assert_eq!(m["config"]["update"]["rule"], "layca");

    // re-running the replay manifest reproduces its files
    let again = dir.path().join("again");
    ok(bin()
        .args([
            "run",
            runs.join("adam-adaptcopy/manifest.json").to_str().unwrap(),
            "--out",
        ])
        .arg(&again)
        .output()
        .unwrap());
    let m2: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(again.join("adam-adaptcopy/manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(m["files"], m2["files"]);
}
