use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn kd(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kd"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn kd")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = kd(dir, args);
    assert!(
        out.status.success(),
        "kd {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn prepared() -> TempDir {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--k", "3", "--n", "40", "--noise", "0.1", "--out", "data.jsonl"]);
    ok(d, &["prepare", "--data", "data.jsonl", "--out-dir", "prep"]);
    tmp
}

#[test]
fn full_pipeline_produces_reports_and_manifests() {
    let tmp = prepared();
    let d = tmp.path();
    ok(d, &["train-teacher", "--data-dir", "prep", "--out", "t.ckpt", "--epochs", "2"]);
    ok(d, &["export-soft-labels", "--teacher", "t.ckpt", "--data-dir", "prep", "--train-only", "--out", "soft.jsonl"]);
    ok(d, &["distill", "--data-dir", "prep", "--soft-labels", "soft.jsonl", "--lambda", "0.2", "--out", "s.ckpt", "--epochs", "3"]);
    let eval = ok(d, &["evaluate", "--checkpoint", "s.ckpt", "--data-dir", "prep"]);
    let report: serde_json::Value = serde_json::from_slice(&eval.stdout).unwrap();
    assert_eq!(report["f1_average"], "macro");
    assert!(report["accuracy"].as_f64().unwrap() >= 0.0);

    for f in ["prep/manifest.json", "t.ckpt.manifest.json", "soft.jsonl.manifest.json", "s.ckpt.manifest.json", "s.ckpt.report.json"] {
        assert!(d.join(f).exists(), "{f} missing");
    }
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("s.ckpt.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "distill");
    assert!(m["inputs"].as_array().unwrap().iter().any(|i| i["path"] == "soft.jsonl"));
    assert_eq!(m["config"]["resolved"]["lambda"], 0.2);
}

#[test]
fn distill_with_teacher_checkpoint_matches_exported_soft_labels() {
    let tmp = prepared();
    let d = tmp.path();
    ok(d, &["train-teacher", "--data-dir", "prep", "--out", "t.ckpt", "--epochs", "1"]);
    ok(d, &["export-soft-labels", "--teacher", "t.ckpt", "--data-dir", "prep", "--out", "soft.jsonl"]);
    ok(d, &["distill", "--data-dir", "prep", "--soft-labels", "soft.jsonl", "--out", "a.ckpt", "--epochs", "2"]);
    ok(d, &["distill", "--data-dir", "prep", "--teacher", "t.ckpt", "--out", "b.ckpt", "--epochs", "2"]);
    assert_eq!(fs::read(d.join("a.ckpt.report.json")).unwrap(), fs::read(d.join("b.ckpt.report.json")).unwrap());
}

#[test]
fn usage_errors_exit_1() {
    let tmp = prepared();
    let d = tmp.path();
    assert_eq!(kd(d, &["distill", "--data-dir", "prep", "--lambda", "0.2", "--out", "s.ckpt"]).status.code(), Some(1));
    assert_eq!(kd(d, &["no-such-command"]).status.code(), Some(1));
    assert_eq!(kd(d, &["distill", "--data-dir", "prep", "--lambda", "-1", "--out", "s.ckpt"]).status.code(), Some(1));
    assert_eq!(kd(d, &["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_2() {
    let tmp = prepared();
    let d = tmp.path();
    ok(d, &["distill", "--data-dir", "prep", "--lambda", "0", "--out", "s.ckpt", "--epochs", "1"]);
    let bytes = fs::read(d.join("s.ckpt")).unwrap();
    let mut tampered = bytes.clone();
    let at = bytes.len() - 5;
    tampered[at] = if bytes[at] == b'1' { b'2' } else { b'1' };
    fs::write(d.join("bad.ckpt"), tampered).unwrap();
    let out = kd(d, &["evaluate", "--checkpoint", "bad.ckpt", "--data-dir", "prep"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checksum"));

    fs::write(d.join("soft.jsonl"), "{\"id\":\"x\",\"probs\":[0.5,0.6,0.1]}\n").unwrap();
    let out = kd(d, &["distill", "--data-dir", "prep", "--soft-labels", "soft.jsonl", "--out", "s2.ckpt"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(kd(d, &["evaluate", "--checkpoint", "missing.ckpt", "--data-dir", "prep"]).status.code(), Some(2));
}

#[test]
fn synth_and_distill_are_deterministic() {
    let tmp = prepared();
    let d = tmp.path();
    ok(d, &["synth", "--k", "3", "--n", "40", "--noise", "0.1", "--out", "again.jsonl"]);
    assert_eq!(fs::read(d.join("data.jsonl")).unwrap(), fs::read(d.join("again.jsonl")).unwrap());
    for name in ["a.ckpt", "b.ckpt"] {
        ok(d, &["--seed", "3", "distill", "--data-dir", "prep", "--lambda", "0", "--out", name, "--epochs", "3"]);
    }
    assert_eq!(fs::read(d.join("a.ckpt")).unwrap(), fs::read(d.join("b.ckpt")).unwrap());
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let tmp = prepared();
    let d = tmp.path();
    fs::write(d.join("run.conf"), "# distill settings\nepochs = 2\nlambda = 0\npatience=1\n").unwrap();
    ok(d, &["--config", "run.conf", "distill", "--data-dir", "prep", "--out", "s.ckpt", "--epochs", "1"]);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("s.ckpt.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["resolved"]["max_epochs"], 1);
    assert_eq!(m["config"]["resolved"]["patience"], 1);
}

#[test]
fn sweep_and_bench_write_json() {
    let tmp = prepared();
    let d = tmp.path();
    ok(d, &["train-teacher", "--data-dir", "prep", "--out", "t.ckpt", "--epochs", "1"]);
    ok(d, &["distill", "--data-dir", "prep", "--lambda", "0", "--out", "s.ckpt", "--epochs", "1"]);
    let sweep = ok(d, &["--threads", "2", "sweep", "--data-dir", "prep", "--teacher", "t.ckpt", "--grid", "0.1,0.2", "--seeds", "0,1,2", "--epochs", "1"]);
    let s: serde_json::Value = serde_json::from_slice(&sweep.stdout).unwrap();
    assert_eq!(s["accuracies"].as_array().unwrap().len(), 2);
    let bench = ok(d, &["bench", "--student", "s.ckpt", "--teacher", "t.ckpt", "--data-dir", "prep", "--iters", "30", "--warmup", "1", "--batch-size", "8"]);
    let b: serde_json::Value = serde_json::from_slice(&bench.stdout).unwrap();
    assert!(b["latency"]["ratio"].as_f64().unwrap() > 0.0);
    assert_eq!(b["size"]["models"].as_array().unwrap().len(), 2);
}

#[test]
fn in_process_run_reports_exit_codes() {
    assert_eq!(kd_cli::run(["kd", "bogus"]), 1);
    assert_eq!(kd_cli::run(["kd", "--config", "/nonexistent/file", "synth", "--out", "x"]), 1);
}

#[test]
fn ratios_accept_commas_or_spaces() {
    let tmp = prepared();
    let d = tmp.path();
    ok(d, &["prepare", "--data", "data.jsonl", "--out-dir", "a", "--ratios", "0.8,0.1,0.1"]);
    ok(d, &["prepare", "--data", "data.jsonl", "--out-dir", "b", "--ratios", "0.8", "0.1", "0.1"]);
    assert_eq!(fs::read(d.join("a/train.jsonl")).unwrap(), fs::read(d.join("b/train.jsonl")).unwrap());
    assert_eq!(kd(d, &["prepare", "--data", "data.jsonl", "--out-dir", "c", "--ratios", "0.8,0.2"]).status.code(), Some(1));
}
