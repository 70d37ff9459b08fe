use std::path::Path;
use std::process::{Command, Output};

const TINY: &[&str] = &[
    "generator.n=600",
    "generator.prevalence=0.05",
    "model.d_dense=4",
    "model.d1=64",
    "model.k1=4",
    "model.d2=8",
    "model.k2=2",
    "train.epochs=2",
    "train.batch_size=64",
    "eval.runs=2",
];

fn hhsae(dir: &Path, cmd: &str, extra: &[&str]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hhsae"));
    c.arg(cmd).arg("--run-dir").arg(dir);
    for o in TINY.iter().chain(extra) {
        c.arg("--override").arg(o);
    }
    c.output().expect("binary runs")
}

fn stderr_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stderr).unwrap_or_else(|_| panic!("stderr: {}", String::from_utf8_lossy(&out.stderr)))
}

#[test]
fn pipeline_smoke() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    for cmd in ["synthgen", "train", "inspect", "discover", "steer", "probe", "augment-eval"] {
        let out = hhsae(dir, cmd, &[]);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(v["command"], cmd);
        assert_eq!(v["ok"], true);
    }
    for f in [
        "manifest.json",
        "checkpoint.hhsae",
        "preprocess_stats.json",
        "data/train.csv",
        "data/test.csv",
        "reports/train_epochs.csv",
        "reports/modules.json",
        "reports/probe.csv",
        "reports/augmentation.csv",
        "synthetic/steered.csv",
    ] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let epochs = std::fs::read_to_string(dir.join("reports/train_epochs.csv")).unwrap();
    assert_eq!(epochs.lines().count(), 3);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    let train = &manifest["commands"]["train"];
    assert_eq!(train["config"]["train"]["epochs"], 2);
    assert!(train["outputs"]["checkpoint.hhsae"].as_str().unwrap().len() == 64);
    let probe = std::fs::read_to_string(dir.join("reports/probe.csv")).unwrap();
    assert!(probe.starts_with("model,tier,auc,sd,gain"));
}

#[test]
fn missing_checkpoint_exits_with_code_3() {
    let tmp = tempfile::tempdir().unwrap();
    let out = hhsae(tmp.path(), "inspect", &[]);
    assert_eq!(out.status.code(), Some(3));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "missing_artifact");
    assert!(err["path"].as_str().unwrap().ends_with("checkpoint.hhsae"));
}

#[test]
fn bad_config_exits_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = hhsae(tmp.path(), "synthgen", &["train.nonsense=1"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "config");

    let cfg = tmp.path().join("c.json");
    std::fs::write(&cfg, "{ not json").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_hhsae"))
        .args(["synthgen", "--run-dir"])
        .arg(tmp.path())
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn steer_requires_discover() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(hhsae(tmp.path(), "synthgen", &[]).status.success());
    assert!(hhsae(tmp.path(), "train", &[]).status.success());
    let out = hhsae(tmp.path(), "steer", &[]);
    assert_eq!(out.status.code(), Some(3));
}
