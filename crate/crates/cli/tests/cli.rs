use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "\
configuration: config2
seed: 3
dataset:
  kind: synthetic
  n: 400
  task:
    kind: blobs
    classes: 3
    dims: 4
    spread: 1.0
target:
  hidden: [12, 8]
  train:
    epochs: 4
dropout_rates: [0.2]
n_inferences: 10
seeds: 1
estimator:
  hidden: [8, 4]
  train:
    epochs: 3
";

fn dpu(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpu"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("exp.cfg"), SMALL).unwrap();
    dir
}

#[test]
fn staged_commands_fill_the_output_layout() {
    let dir = setup();
    for cmd in ["train-target", "gen-pu", "extract-features", "train-estimator", "evaluate"] {
        let out = dpu(dir.path(), &["--config", "exp.cfg", "--out", "o", cmd]);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let o = dir.path().join("o");
    for f in [
        "checkpoints/target.dpum",
        "checkpoints/side.dpum",
        "checkpoints/estimator_regression.dpum",
        "checkpoints/estimator_classification.dpum",
        "pu_labels.csv",
        "features.csv",
        "features.manifest.txt",
        "report.json",
        "confusion.csv",
        "histograms/pu.csv",
    ] {
        assert!(o.join(f).exists(), "missing {f}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(o.join("report.json")).unwrap()).unwrap();
    let run = &report["payload"]["runs"][0];
    for key in ["target_quality", "estimator_r2", "estimator_accuracy", "dropout_rate", "n_inferences"] {
        assert!(run["metrics"]["metrics"].get(key).is_some(), "missing {key}");
    }
    assert_eq!(run["metrics"]["metadata"]["configuration"], "config2");
    assert!(run["metrics"]["metadata"].get("seed").is_some());
    assert!(report["runtime"].get("elapsed_ms").is_some());
}

#[test]
fn run_is_deterministic_and_csv_format_writes_table() {
    let dir = setup();
    let a = dpu(dir.path(), &["--config", "exp.cfg", "--out", "a", "run"]);
    let b = dpu(dir.path(), &["--config", "exp.cfg", "--out", "b", "--format", "csv", "run"]);
    assert!(a.status.success() && b.status.success());
    let payload = |d: &str| {
        let v: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join(d).join("report.json")).unwrap(),
        )
        .unwrap();
        v["payload"].clone()
    };
    assert_eq!(payload("a"), payload("b"));
    assert!(dir.path().join("b/report.csv").exists());
    assert!(String::from_utf8_lossy(&b.stdout).starts_with("metric,value"));
    let ck = |d: &str| std::fs::read(dir.path().join(d).join("rate_0.2/seed_0/checkpoints/target.dpum")).unwrap();
    assert_eq!(ck("a"), ck("b"));

    let c = dpu(dir.path(), &["--config", "exp.cfg", "--out", "c", "--seed", "4", "run"]);
    assert!(c.status.success());
    assert_ne!(payload("a"), payload("c"));
}

#[test]
fn exit_codes() {
    let dir = setup();
    assert_eq!(dpu(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(dpu(dir.path(), &["run", "--format", "xml"]).status.code(), Some(1));
    assert_eq!(dpu(dir.path(), &["--config", "missing.cfg", "run"]).status.code(), Some(1));
    std::fs::write(dir.path().join("bad.cfg"), "n_inferences: 1\n").unwrap();
    assert_eq!(dpu(dir.path(), &["--config", "bad.cfg", "run"]).status.code(), Some(1));
    std::fs::write(dir.path().join("typo.cfg"), "seeds: 2\ntarget:\n  hiden: [4]\n").unwrap();
    let out = dpu(dir.path(), &["--config", "typo.cfg", "run"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    // Stages that need earlier artifacts fail at runtime.
    let out = dpu(dir.path(), &["--config", "exp.cfg", "--out", "empty", "gen-pu"]);
    assert_eq!(out.status.code(), Some(2));
}
