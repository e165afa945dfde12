use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const TOY: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/toy.toml");

fn smokeynet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smokeynet"))
        .args(["--config", TOY])
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = smokeynet(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(args: &[&str]) -> Value {
    serde_json::from_str(&ok(args)).unwrap()
}

const SMALL: [&str; 8] = [
    "--set",
    "synthetic.n_fires=4",
    "--set",
    "stage_one.optimizer.max_epochs=1",
    "--set",
    "stage_two.optimizer.max_epochs=1",
    "--set",
    "suite.seeds=[0]",
];

fn with_small<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v: Vec<&str> = args.to_vec();
    v.extend_from_slice(&SMALL);
    v
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_prepare_train_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let v = json(&with_small(&["synth", "--out", s(&data)]));
    assert_eq!(v["fires"], 4);
    assert!(data.join("manifest.csv").exists());

    let stats = tmp.path().join("stats.json");
    let v = json(&with_small(&["prepare", "--data", s(&data), "--stats-out", s(&stats)]));
    assert_eq!(v["weather"], true);
    assert_eq!(v["samples"][0].as_u64().unwrap() % 79, 0);
    assert!(stats.exists());

    let van = tmp.path().join("vanilla");
    let v = json(&with_small(&["train", "--data", s(&data), "--out", s(&van)]));
    assert!(v["best_val_loss"].as_f64().unwrap().is_finite());
    let ckpt = van.join("best.ckpt");
    assert!(ckpt.exists() && van.join("metrics.csv").exists());

    let mm = tmp.path().join("mm");
    json(&with_small(&[
        "train", "--data", s(&data), "--out", s(&mm), "--stage", "multimodal", "--init", s(&ckpt),
    ]));
    let eval = tmp.path().join("eval");
    let v = json(&with_small(&[
        "evaluate",
        "--data",
        s(&data),
        "--checkpoint",
        s(&mm.join("best.ckpt")),
        "--out",
        s(&eval),
    ]));
    let f1 = v["metrics"]["f1"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&f1));
    assert!(eval.join("predictions.csv").exists());
}

#[test]
fn multimodal_stage_needs_a_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&with_small(&["synth", "--out", s(&data)]));
    let out = smokeynet(&with_small(&[
        "train", "--data", s(&data), "--out", s(&tmp.path().join("x")), "--stage", "multimodal",
    ]));
    assert!(!out.status.success());
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "config");
}

#[test]
fn suite_then_report_reproduces_the_table() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("suite");
    let printed = ok(&with_small(&["suite", "--synthetic", "--out", s(&out)]));
    for arm in ["baseline", "random_weather", "real_weather"] {
        assert!(printed.contains(arm));
        assert!(out.join(format!("predictions_{arm}_seed0.csv")).exists());
    }
    let table = std::fs::read_to_string(out.join("table.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
    assert!(out.join("metrics.svg").exists() && out.join("ttd_histogram.svg").exists());

    let again = tmp.path().join("report");
    ok(&["report", "--logs", s(&out), "--out", s(&again)]);
    assert_eq!(std::fs::read_to_string(again.join("table.csv")).unwrap(), table);
}

#[test]
fn unknown_key_is_a_json_error() {
    let out = smokeynet(&["--set", "model.nonsense=3", "config"]);
    assert!(!out.status.success());
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "config");
    assert!(err["error"]["message"].as_str().unwrap().contains("model.nonsense"));
}

#[test]
fn missing_corpus_is_an_io_error() {
    let out = smokeynet(&["prepare", "--data", "/nonexistent/corpus"]);
    assert!(!out.status.success());
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "io");
}

#[test]
fn printed_config_loads_back() {
    let tmp = tempfile::tempdir().unwrap();
    let text = ok(&["--set", "stage_two.optimizer.learning_rate=0.002", "config"]);
    let path = tmp.path().join("c.toml");
    std::fs::write(&path, &text).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_smokeynet"))
        .args(["--config", s(&path), "config"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap(), text);
    assert!(text.contains("learning_rate = 0.002"));
}
