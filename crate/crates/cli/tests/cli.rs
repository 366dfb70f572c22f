use std::path::Path;
use std::process::{Command, Output};

fn augrank(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_augrank"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = augrank(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn stage_by_stage_flow() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(
        d,
        &["synth", "--out", "data", "--count", "16", "--size", "96", "--seed", "2"],
    );
    ok(
        d,
        &[
            "filter",
            "--manifest",
            "data/manifest.jsonl",
            "--out",
            "work/filtered.jsonl",
        ],
    );
    ok(
        d,
        &[
            "pairs",
            "--manifest",
            "work/filtered.jsonl",
            "--task",
            "zoom-in",
            "--seed",
            "4",
            "--out",
            "work/pairs",
            "--pairs-per-image",
            "2",
        ],
    );
    ok(
        d,
        &[
            "features",
            "--pairs",
            "work/pairs",
            "--backbone",
            "dct",
            "--out",
            "work/dct",
        ],
    );
    ok(
        d,
        &["features", "ingest", "--bundle", "work/dct", "--pairs", "work/pairs"],
    );
    let trained: serde_json::Value = serde_json::from_str(&ok(
        d,
        &[
            "train",
            "--pairs",
            "work/pairs",
            "--bundle",
            "work/dct",
            "--out",
            "work/probe.json",
            "--epochs",
            "20",
        ],
    ))
    .unwrap();
    let evaluated: serde_json::Value = serde_json::from_str(&ok(
        d,
        &[
            "eval",
            "--probe",
            "work/probe.json",
            "--pairs",
            "work/pairs",
            "--bundle",
            "work/dct",
        ],
    ))
    .unwrap();
    assert_eq!(trained["val_accuracy"], evaluated["val_accuracy"]);
    assert_eq!(trained["train_accuracy"], evaluated["train_accuracy"]);

    ok(
        d,
        &[
            "importance",
            "--probe",
            "work/probe.json",
            "--pairs",
            "work/pairs",
            "--bundle",
            "work/dct",
            "--mode",
            "max",
            "--out",
            "work/imp.csv",
        ],
    );
    let csv = std::fs::read_to_string(d.join("work/imp.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("task,layer,block,mode,raw,share"));
    assert!(csv.lines().skip(1).all(|l| l.starts_with("zoom_in,dct_pooled,0,max,")));

    ok(
        d,
        &[
            "ablate",
            "--pairs",
            "work/pairs",
            "--bundle",
            "work/dct",
            "--blocks",
            "0",
            "--epochs",
            "5",
            "--out",
            "work/abl.csv",
        ],
    );
    assert!(std::fs::read_to_string(d.join("work/abl.csv"))
        .unwrap()
        .contains("zoom_in,0,192,"));
    ok(
        d,
        &[
            "report",
            "--importance",
            "work/imp.csv",
            "--mode",
            "max",
            "--out",
            "work/heat.png",
        ],
    );
    assert!(d.join("work/heat.png").exists());
}

#[test]
fn run_with_config_and_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--out", "data", "--count", "12", "--size", "64"]);
    std::fs::write(
        d.join("cfg.json"),
        r#"{"dataset": "data/manifest.jsonl", "tasks": ["hue"], "backbone": "dct", "train": {"epochs": 5}, "output_dir": "ignored"}"#,
    )
    .unwrap();
    let stdout = ok(
        d,
        &[
            "run",
            "--config",
            "cfg.json",
            "--tasks",
            "contrast,brightness",
            "--out",
            "out",
            "--seed",
            "3",
        ],
    );
    assert!(stdout.contains("contrast") && stdout.contains("brightness") && !stdout.contains("hue"));
    assert!(!d.join("ignored").exists());
    let cfg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("out/config.json")).unwrap()).unwrap();
    assert_eq!(cfg["experiment_seed"], 3);
    assert_eq!(cfg["train"]["epochs"], 5);
}

#[test]
fn exit_codes_follow_error_class() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    // config: nothing to do
    assert_eq!(augrank(d, &["run", "--dataset", "x.jsonl"]).status.code(), Some(2));
    // config: usage error from the argument parser
    assert_eq!(augrank(d, &["pairs", "--task", "rotation"]).status.code(), Some(2));
    // data: missing manifest
    assert_eq!(
        augrank(d, &["filter", "--manifest", "nope.jsonl", "--out", "f.jsonl"])
            .status
            .code(),
        Some(3)
    );

    ok(d, &["synth", "--out", "data", "--count", "8", "--size", "64"]);
    ok(
        d,
        &[
            "pairs",
            "--manifest",
            "data/manifest.jsonl",
            "--task",
            "brightness",
            "--out",
            "pairs",
        ],
    );
    ok(
        d,
        &["features", "--pairs", "pairs", "--backbone", "dct", "--out", "feat"],
    );
    // numerical: training blows up
    let out = augrank(
        d,
        &[
            "train",
            "--pairs",
            "pairs",
            "--bundle",
            "feat",
            "--out",
            "p.json",
            "--learning-rate",
            "1e300",
            "--l2",
            "1",
        ],
    );
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    // data: bundle for other pairs
    ok(
        d,
        &[
            "pairs",
            "--manifest",
            "data/manifest.jsonl",
            "--task",
            "hue",
            "--out",
            "hue",
        ],
    );
    let out = augrank(d, &["features", "ingest", "--bundle", "feat", "--pairs", "hue"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hue-img00000-000"));
}
