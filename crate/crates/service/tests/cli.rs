use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qfeedback::corpus::MemoryInteractionStore;
use qfeedback::Phase;
use qfeedback_service::cli::chat_loop;
use qfeedback_service::config::AppConfig;
use qfeedback_service::tutor::Tutor;
use serde_json::Value;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn qfb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qfb"))
        .args(args)
        .env_remove("QFB_MANIFEST")
        .env_remove("QFB_GENERATOR")
        .env_remove("QFB_SCORERS")
        .env("QFB_EXERCISES", data("exercises.jsonl"))
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = qfb(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn exit_codes() {
    assert_eq!(qfb(&["--help"]).status.code(), Some(0));
    assert_eq!(qfb(&["--version"]).status.code(), Some(0));
    assert_eq!(qfb(&[]).status.code(), Some(2));
    assert_eq!(qfb(&["chat"]).status.code(), Some(2));
    assert_eq!(qfb(&["split", "--out-dir", "x", "--seed", "minus-one"]).status.code(), Some(2));

    let out = qfb(&["eval-gains", "--interactions", "/nonexistent/log.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("error: load interactions"), "{stderr}");
    // without --manifest the run manifest is one JSON line on stderr
    let manifest: Value = stderr.lines().find_map(|l| serde_json::from_str(l).ok()).expect("manifest on stderr");
    assert_eq!(manifest["status"], "error");
    assert_eq!(manifest["invocation"]["command"], "eval-gains");
}

#[test]
fn manifest_lists_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("run.json");
    let out_dir = dir.path().join("split");
    ok(&["split", "--input", s(&data("qg_dataset.jsonl")), "--out-dir", s(&out_dir), "--manifest", s(&manifest)]);
    let m: Value = serde_json::from_slice(&read(&manifest)).unwrap();
    assert_eq!(m["tool"], "qfb");
    assert_eq!(m["status"], "ok");
    assert_eq!(m["invocation"]["seed"], 7);
    let outputs: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(outputs.len(), 3);
    assert!(outputs[0].ends_with("train.jsonl"));
}

#[test]
fn split_and_bank_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| {
        let root = dir.path().join(tag);
        let stdout = ok(&["split", "--input", s(&data("qg_dataset.jsonl")), "--out-dir", s(&root), "--seed", "11"]);
        assert_eq!(stdout.trim(), "split 300 examples: train 220, valid 40, test 40");
        let bank = root.join("bank.jsonl");
        ok(&["build-bank", "--exercises", s(&data("exercises.jsonl")), "--out", s(&bank)]);
        ["train.jsonl", "valid.jsonl", "test.jsonl", "bank.jsonl"].map(|f| read(&root.join(f)))
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn trained_generator_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("qg.json");
    let stdout = ok(&["train-qg", "--dataset", s(&data("qg_dataset.jsonl")), "--epochs", "2", "--out", s(&state)]);
    assert!(stdout.starts_with("validation loss per epoch: ["), "{stdout}");
    let spec = format!("memorizing:{}", s(&state));
    let report = dir.path().join("gen.json");
    ok(&["eval-gen", "--dataset", s(&data("qg_dataset.jsonl")), "--generator", &spec, "--out", s(&report)]);
    let fresh = dir.path().join("fresh.json");
    ok(&["eval-gen", "--dataset", s(&data("qg_dataset.jsonl")), "--out", s(&fresh)]);
    let (a, b): (Value, Value) =
        (serde_json::from_slice(&read(&report)).unwrap(), serde_json::from_slice(&read(&fresh)).unwrap());
    assert_eq!(a["report"], b["report"]);
}

#[test]
fn learning_gain_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gains.json");
    let stdout = ok(&["eval-gains", "--interactions", s(&data("interactions.jsonl")), "--out", s(&out)]);
    assert!(stdout.contains("question_based"), "{stdout}");
    let reports: Value = serde_json::from_slice(&read(&out)).unwrap();
    let qb = reports.as_array().unwrap().iter().find(|r| r["model"] == "question_based").unwrap();
    assert_eq!(qb["n"], 10);
    assert!((qb["gain_all_attempts"].as_f64().unwrap() - 40.0).abs() < 1e-9);

    let only = ok(&["eval-gains", "--interactions", s(&data("interactions.jsonl")), "--model", "minimal"]);
    assert!(!only.contains("question_based"));
    assert_eq!(
        qfb(&["eval-gains", "--interactions", s(&data("interactions.jsonl")), "--model", "x"]).status.code(),
        Some(1)
    );
}

#[test]
fn chat_replays_a_script() {
    let mut config = AppConfig::default();
    config.data.exercises = data("exercises.jsonl");
    let tutor = Tutor::with_store(&config, std::sync::Arc::new(MemoryInteractionStore::new())).unwrap();
    let script = "Treatment A\n\nLess\nTreatment A, because it is less homogeneous than treatment B\nignored\n";
    let mut out = Vec::new();
    let phase = chat_loop(&tutor, "treatment-homogeneity", script.as_bytes(), &mut out).unwrap();
    assert_eq!(phase, Phase::Done);
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 7);
    assert_eq!(lines[1], "student> Treatment A");
    assert_eq!(lines[4], "tutor> Ok, now try to answer the original exercise.");
    assert_eq!(lines[6], "tutor> That's correct!");
}

#[test]
fn chat_command_logs_interactions() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("turns.txt");
    std::fs::write(&script, "Treatment B, because it costs more\n").unwrap();
    let log = dir.path().join("log.jsonl");
    let stdout =
        ok(&["chat", "--exercise", "treatment-homogeneity", "--script", s(&script), "--interactions", s(&log)]);
    assert!(stdout.contains("\"Treatment B\" is incorrect."), "{stdout}");
    assert!(stdout.ends_with("(session ended before completion)\n"));
    let rows = String::from_utf8(read(&log)).unwrap();
    assert_eq!(rows.lines().count(), 1);
    assert_eq!(qfb(&["chat", "--exercise", "no-such-exercise", "--script", s(&script)]).status.code(), Some(1));
}
