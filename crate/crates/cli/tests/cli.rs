use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_authorguard"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn synth(dir: &Path, seed: &str) -> std::path::PathBuf {
    let out = dir.join(format!("corpus_{seed}.jsonl"));
    ok(&[
        "synth",
        "--n-accounts",
        "6",
        "--posts-per-account",
        "9",
        "--seed",
        seed,
        "--out",
        s(&out),
    ]);
    out
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["gradcheck", "--no-such-flag"]).status.code(), Some(1));
    let help = run(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("gradcheck"));
}

#[test]
fn validation_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("absent.jsonl");
    let out = run(&["pairs", "--in", s(&missing), "--train-out", "a", "--test-out", "b"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());

    let bad = tmp.path().join("bad.jsonl");
    fs::write(&bad, "{not json}\n").unwrap();
    let out = run(&[
        "pairs",
        "--in",
        s(&bad),
        "--train-out",
        s(&tmp.path().join("tr")),
        "--test-out",
        s(&tmp.path().join("te")),
    ]);
    assert_eq!(out.status.code(), Some(1));

    let corpus = synth(tmp.path(), "1");
    let out = run(&[
        "pairs",
        "--in",
        s(&corpus),
        "--train-out",
        s(&tmp.path().join("tr")),
        "--test-out",
        s(&tmp.path().join("te")),
        "--train-fraction",
        "1.5",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn synth_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let a = synth(tmp.path(), "4");
    let first = fs::read(&a).unwrap();
    let manifest = fs::read(tmp.path().join("corpus_4.jsonl.manifest.json")).unwrap();
    fs::remove_file(&a).unwrap();
    let b = synth(tmp.path(), "4");
    assert_eq!(first, fs::read(&b).unwrap());
    assert_eq!(manifest, fs::read(tmp.path().join("corpus_4.jsonl.manifest.json")).unwrap());
    let truth = json(&tmp.path().join("corpus_4.jsonl.truth.json"));
    assert_eq!(truth["compromise_points"].as_object().unwrap().len(), 6);
}

#[test]
fn pairs_writes_both_files_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = synth(tmp.path(), "2");
    let before = fs::read(&corpus).unwrap();
    let (tr, te) = (tmp.path().join("tr.jsonl"), tmp.path().join("te.jsonl"));
    ok(&["pairs", "--in", s(&corpus), "--train-out", s(&tr), "--test-out", s(&te), "--seed", "7"]);
    let lines = |p: &Path| fs::read_to_string(p).unwrap().lines().count();
    assert!(lines(&tr) > 0 && lines(&te) > 0);
    let manifest = json(&tmp.path().join("tr.jsonl.manifest.json"));
    assert_eq!(manifest["subcommand"], "pairs");
    assert_eq!(manifest["args"]["seed"], 7);
    let digests = manifest["outputs"].as_object().unwrap();
    assert_eq!(digests.len(), 2);
    assert_eq!(before, fs::read(&corpus).unwrap(), "input left untouched");
}

#[test]
fn gradcheck_reports_and_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let report = tmp.path().join("grad.json");
    let out = ok(&["gradcheck", "--seed", "3", "--out", s(&report)]);
    let printed: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(printed["passed"], true);
    assert!(printed["max_rel_error"].as_f64().unwrap() < 1e-4);
    assert_eq!(json(&report)["passed"], true);
    ok(&["gradcheck", "--seed", "4", "--merge", "concat"]);
}

#[test]
fn train_eval_detect_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let corpus = synth(dir, "3");
    let (tr, te, va) = (dir.join("tr.jsonl"), dir.join("te.jsonl"), dir.join("va.jsonl"));
    ok(&[
        "pairs",
        "--in",
        s(&corpus),
        "--train-out",
        s(&tr),
        "--test-out",
        s(&te),
        "--validation-out",
        s(&va),
        "--train-fraction",
        "0.67",
        "--balance-ratio",
        "1",
    ]);
    let model = dir.join("model");
    ok(&[
        "train",
        "--corpus",
        s(&corpus),
        "--pairs",
        s(&tr),
        "--validation-pairs",
        s(&va),
        "--epochs",
        "1",
        "--hidden-dim",
        "8",
        "--merge-hidden",
        "8",
        "--embedding-dim",
        "8",
        "--out-dir",
        s(&model),
    ]);
    for f in ["model.avf", "vocab.txt", "threshold.json", "train_report.json", "manifest.json"] {
        assert!(model.join(f).exists(), "{f} missing");
    }
    let threshold = json(&model.join("threshold.json"));
    assert_eq!(threshold["calibrated"], true);

    let report = dir.join("eval.json");
    let csv = dir.join("sweep.csv");
    ok(&[
        "eval",
        "--corpus",
        s(&corpus),
        "--pairs",
        s(&te),
        "--model-dir",
        s(&model),
        "--sweep",
        "0.25,0.5,0.75",
        "--sweep-csv",
        s(&csv),
        "--out",
        s(&report),
    ]);
    let r = json(&report);
    assert!(r["metrics"]["counts"]["tp"].is_u64());
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 4);
    let out = run(&[
        "eval",
        "--corpus",
        s(&corpus),
        "--pairs",
        s(&te),
        "--model-dir",
        s(&model),
        "--tau",
        "1.5",
        "--out",
        s(&report),
    ]);
    assert_eq!(out.status.code(), Some(1));

    let log = dir.join("detect.jsonl");
    ok(&["detect", "--corpus", s(&corpus), "--model-dir", s(&model), "--out", s(&log)]);
    let events = fs::read_to_string(&log).unwrap().lines().count();
    assert_eq!(events, 6 * 9);
    let summary = json(&dir.join("detect.jsonl.summary.json"));
    assert_eq!(summary["summary"]["accounts"], 6);
}
