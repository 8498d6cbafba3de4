use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::{json, Value};

fn htgnn(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_htgnn"))
        .args(args)
        .env("HTGNN_THREADS", "1")
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small bearing grid: 3 speeds × 2 load pairs, 6 conditions.
fn small_bearing(dir: &Path) -> std::path::PathBuf {
    let cfg = dir.join("gen.json");
    fs::write(
        &cfg,
        json!({"speeds": [10.0, 20.0, 30.0], "loads": [[5.0, 20.0], [15.0, 40.0]]}).to_string(),
    )
    .unwrap();
    let data = dir.join("data");
    let (code, _, err) = htgnn(&["generate", "--dataset", "bearing-like", "--config", p(&cfg), "--seed", "1", "--out", p(&data)]);
    assert_eq!(code, 0, "{err}");
    data
}

/// Tiny model and a few epochs so CLI tests stay fast.
fn fast_config(dir: &Path) -> std::path::PathBuf {
    let cfg = dir.join("run.json");
    fs::write(
        &cfg,
        json!({
            "model": {"d": 8, "d_graph": 8, "readout_hidden": 8, "head_hidden": 8},
            "train": {"max_epochs": 3, "min_epochs": 1, "patience": 2, "plateau_patience": 1, "warmup_iters": 5}
        })
        .to_string(),
    )
    .unwrap();
    cfg
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn generate_default_bearing_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("b");
    let (code, _, err) = htgnn(&["generate", "--dataset", "bearing-like", "--out", p(&out)]);
    assert_eq!(code, 0, "{err}");
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["conditions"].as_array().unwrap().len(), 55);
    assert_eq!(fs::read_dir(&out).unwrap().count(), 56);
}

#[test]
fn generate_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        assert_eq!(htgnn(&["generate", "--dataset", "bridge-like", "--seed", "7", "--out", p(d)]).0, 0);
    }
    assert_eq!(dir_contents(&a), dir_contents(&b));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(htgnn(&["generate", "--dataset", "bearing-like"]).0, 2);
    assert_eq!(htgnn(&["generate", "--dataset", "tunnel", "--out", "x"]).0, 2);
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, r#"{"lenght": 10}"#).unwrap();
    let (code, _, err) = htgnn(&["generate", "--dataset", "bearing-like", "--config", p(&cfg), "--out", p(tmp.path())]);
    assert_eq!(code, 2);
    assert!(err.contains("lenght"), "{err}");
}

#[test]
fn unknown_variant_lists_valid_names() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_bearing(tmp.path());
    let (code, _, err) = htgnn(&["train", "--data", p(&data), "--variant", "HTGNN2", "--out", p(tmp.path())]);
    assert_eq!(code, 2);
    assert!(err.contains("HTGNN_wo_EXO") && err.contains("MTGAT"), "{err}");
}

#[test]
fn train_evaluate_and_plot() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_bearing(tmp.path());
    let cfg = fast_config(tmp.path());
    let runs = tmp.path().join("runs");
    let (code, _, err) = htgnn(&[
        "train", "--data", p(&data), "--variant", "HTGNN", "--seed", "1,2,3", "--config", p(&cfg), "--out", p(&runs),
    ]);
    assert_eq!(code, 0, "{err}");
    for s in 1..=3 {
        let d = runs.join(format!("seed_{s}"));
        for f in ["model.json", "model.bin", "history.csv", "metrics.json"] {
            assert!(d.join(f).exists(), "missing {f} in seed_{s}");
        }
        let history = fs::read_to_string(d.join("history.csv")).unwrap();
        assert!(history.starts_with("epoch,train_loss,val_loss,lr\n"));
        assert_eq!(history.lines().count(), 4);
    }

    // seeded reruns reproduce the deterministic artifacts byte for byte
    let again = tmp.path().join("again");
    assert_eq!(
        htgnn(&["train", "--data", p(&data), "--variant", "HTGNN", "--seed", "2", "--config", p(&cfg), "--out", p(&again)]).0,
        0
    );
    for f in ["model.json", "model.bin", "history.csv", "metrics.json"] {
        assert_eq!(fs::read(again.join(f)).unwrap(), fs::read(runs.join("seed_2").join(f)).unwrap(), "{f}");
    }

    let ckpt = runs.join("seed_1/model.json");
    let preds = tmp.path().join("preds.csv");
    let (code, stdout, err) = htgnn(&[
        "evaluate", "--checkpoint", p(&ckpt), "--data", p(&data), "--by", "speed", "--predictions", p(&preds),
    ]);
    assert_eq!(code, 0, "{err}");
    let metrics: Value = serde_json::from_str(&stdout).unwrap();
    let cats: Vec<&str> = metrics["categories"].as_array().unwrap().iter().map(|c| c["category"].as_str().unwrap()).collect();
    assert_eq!(cats, ["10", "20", "30"]);
    assert_eq!(metrics["average"]["category"], "avg");

    let svg = tmp.path().join("timeline.svg");
    let (code, _, err) = htgnn(&["plot", "--report", p(&preds), "--kind", "timeline", "--out", p(&svg)]);
    assert_eq!(code, 0, "{err}");
    assert!(fs::read_to_string(&svg).unwrap().starts_with("<svg"));
    assert_eq!(htgnn(&["plot", "--report", p(&preds), "--kind", "pie", "--out", p(&svg)]).0, 2);

    // a bridge dataset has a different graph: shape mismatch
    let bridge = tmp.path().join("bridge");
    assert_eq!(htgnn(&["generate", "--dataset", "bridge-like", "--out", p(&bridge)]).0, 0);
    assert_eq!(htgnn(&["evaluate", "--checkpoint", p(&ckpt), "--data", p(&bridge)]).0, 4);
}

#[test]
fn divergence_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_bearing(tmp.path());
    let cfg = tmp.path().join("diverge.json");
    fs::write(
        &cfg,
        json!({"train": {"lr0": 1e300, "lr_min": 1e299, "max_epochs": 3, "min_epochs": 1, "patience": 2}}).to_string(),
    )
    .unwrap();
    let (code, _, err) = htgnn(&[
        "train", "--data", p(&data), "--variant", "CNN1D", "--config", p(&cfg), "--out", p(&tmp.path().join("r")),
    ]);
    assert_eq!(code, 3, "{err}");
}

#[test]
fn ablate_reports_every_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_bearing(tmp.path());
    let cfg = fast_config(tmp.path());
    let out = tmp.path().join("ablate");
    assert_eq!(htgnn(&["ablate", "--data", p(&data), "--seeds", "1", "--out", p(&out)]).0, 2);
    let (code, _, err) = htgnn(&[
        "ablate", "--data", p(&data), "--seeds", "1,2", "--variants", "HTGNN,HTGNN_wo_EXO", "--config", p(&cfg), "--out",
        p(&out),
    ]);
    assert_eq!(code, 0, "{err}");
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 4);
    let names: Vec<&str> = report["summary"].as_array().unwrap().iter().map(|s| s["variant"].as_str().unwrap()).collect();
    assert_eq!(names, ["HTGNN", "HTGNN_wo_EXO"]);
    let csv = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(csv.starts_with("variant,category,target,runs,nrmse_mean"));

    let bars = tmp.path().join("bars.svg");
    let (code, _, err) = htgnn(&["plot", "--report", p(&out.join("report.json")), "--kind", "bars", "--out", p(&bars)]);
    assert_eq!(code, 0, "{err}");
    assert!(tmp.path().join("bars_F_x.svg").exists() && tmp.path().join("bars_F_y.svg").exists());
}

#[test]
fn spectrum_plot_from_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_bearing(tmp.path());
    let svg = tmp.path().join("spectrum.svg");
    let (code, _, err) = htgnn(&["plot", "--report", p(&data), "--kind", "spectrum", "--out", p(&svg)]);
    assert_eq!(code, 0, "{err}");
    let text = fs::read_to_string(&svg).unwrap();
    assert!(text.contains("speed 10") && text.contains("speed 30"));
}
