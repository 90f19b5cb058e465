use std::path::Path;
use std::process::{Command, Output};

use gaitrec::eval::{auc_from_csv, roc_curve};

fn gaitrec(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gaitrec"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = gaitrec(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = gaitrec(dir.path(), &["synth", "--frobnicate", "3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = gaitrec(dir.path(), &["segment-steps", "--input", "nowhere/rec.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("nowhere/rec.csv"), "{err}");
}

#[test]
fn bad_config_value_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.cfg"), "subjects=many\n").unwrap();
    let out = gaitrec(dir.path(), &["synth", "--config", "bad.cfg"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("subjects"));
}

#[test]
fn roc_command_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let scores = [0.9, 0.8, 0.75, 0.6, 0.55, 0.4, 0.3, 0.2, 0.1, 0.05];
    let labels = [true, true, false, true, false, true, false, false, true, false];
    let text = |v: Vec<String>| v.join("\n") + "\n";
    std::fs::write(dir.path().join("s.txt"), text(scores.iter().map(|s| s.to_string()).collect())).unwrap();
    std::fs::write(
        dir.path().join("l.txt"),
        text(labels.iter().map(|&l| u8::from(l).to_string()).collect()),
    )
    .unwrap();
    let stdout = ok(dir.path(), &["roc", "--scores", "s.txt", "--labels", "l.txt", "--out", "r"]);
    let want = roc_curve(&scores, &labels).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("r/roc.csv")).unwrap();
    assert!((auc_from_csv(&csv).unwrap() - want.auc).abs() < 1e-9);
    assert!(stdout.contains(&format!("auc={}", want.auc)));
}

#[test]
fn walking_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--subjects", "3", "--twins", "0", "--seconds", "40", "--out", "walk"]);
    assert!(d.join("walk/S000_0.csv").exists());
    assert!(d.join("walk/S000_0.mask").exists());
    let steps = ok(d, &["segment-steps", "--input", "walk/S000_0.csv", "--out", "steps"]);
    assert!(steps.starts_with("steps="));
    let csv = std::fs::read_to_string(d.join("steps/S000_0.steps.csv")).unwrap();
    assert!(csv.lines().count() > 20);

    ok(d, &["build-dataset", "--recipe", "interp", "--overlap", "1step", "--input", "walk", "--out", "ident"]);
    ok(d, &["train", "--model", "cnn", "--data", "ident", "--epochs", "2", "--out", "cnn"]);
    ok(d, &["eval", "--model", "cnn/model.bin", "--data", "ident", "--out", "cnn"]);
    let report = std::fs::read_to_string(d.join("cnn/report.txt")).unwrap();
    assert!(report.contains("accuracy="));
    assert!(d.join("cnn/confusion.csv").exists());
    ok(d, &["baseline", "--method", "fourier", "--data", "ident", "--out", "base"]);
    assert!(d.join("base/baseline_report.txt").exists());

    // The frozen-branch variant refuses to start without its donor.
    let out = gaitrec(d, &["train", "--model", "cnn-fix-lstm", "--data", "ident", "--out", "x"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn segnet_model_drives_extract_walk() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--subjects", "2", "--twins", "0", "--seconds", "82", "--kind", "activity", "--out", "act"]);
    ok(d, &["build-dataset", "--recipe", "extract", "--input", "act", "--out", "ext"]);
    ok(
        d,
        &["train", "--model", "segnet", "--data", "ext", "--epochs", "1", "--width-divisor", "32", "--out", "seg"],
    );
    let stdout = ok(
        d,
        &["extract-walk", "--model", "seg/model.bin", "--input", "act/S000_0.csv", "--out", "sessions"],
    );
    assert!(stdout.starts_with("sessions="));

    // Missing recording.
    let out = gaitrec(d, &["extract-walk", "--model", "seg/model.bin", "--input", "nope.csv"]);
    assert_eq!(out.status.code(), Some(1));
}
