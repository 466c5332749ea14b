//! End-to-end runs of the command-line binary in a scratch directory.

use std::path::Path;
use std::process::{Command, Output};

use causalrep::manifest::RunManifest;

fn causalrep(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_causalrep"))
        .args(args)
        .current_dir(dir)
        .env("CAUSALREP_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = causalrep(dir, args);
    assert!(
        out.status.success(),
        "{args:?} exited with {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn binary_model_to_probabilities_of_causation() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["synth", "binary-poc", "--p", "0.5", "--out", "poc.json"]);
    assert!(dir.join("poc.json.manifest.json").exists());
    ok(
        dir,
        &[
            "--no-manifest",
            "pns",
            "poc",
            "--scm",
            "poc.json",
            "--cause",
            "Z1=1",
            "--outcome",
            "Y1=1",
            "--out",
            "lb.json",
        ],
    );
    let v = json(&dir.join("lb.json"));
    let text = v.to_string();
    assert!(text.contains("0.6"), "{text}");
    assert!(text.contains("0.8"), "{text}");
}

#[test]
fn train_predict_and_measure_on_toy_data() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(
        dir,
        &[
            "synth",
            "toy-linear",
            "--seed",
            "4",
            "--n-train",
            "400",
            "--n-test",
            "200",
            "--out",
            "toy.csv",
        ],
    );
    assert!(dir.join("toy.test.csv").exists());
    std::fs::write(
        dir.join("cfg.json"),
        r#"{"pinpoint_threshold": 0.05, "class": "selection"}"#,
    )
    .unwrap();
    ok(
        dir,
        &[
            "train",
            "--data",
            "toy.csv",
            "--class",
            "select",
            "--d",
            "2",
            "--k",
            "1",
            "--iterations",
            "150",
            "--restarts",
            "2",
            "--config",
            "cfg.json",
            "--out",
            "rep.json",
        ],
    );
    assert!(dir.join("rep.predictor.json").exists());
    ok(
        dir,
        &[
            "predict",
            "--rep",
            "rep.json",
            "--predictor",
            "rep.predictor.json",
            "--data",
            "toy.test.csv",
            "--out",
            "yhat.csv",
        ],
    );
    let preds = std::fs::read_to_string(dir.join("yhat.csv")).unwrap();
    assert_eq!(preds.lines().next(), Some("yhat"));
    assert_eq!(preds.lines().count(), 201);

    ok(
        dir,
        &[
            "pns",
            "measure",
            "--data",
            "toy.csv",
            "--rep",
            "rep.json",
            "--k",
            "1",
            "--threshold",
            "0.05",
            "--out",
            "pns.json",
        ],
    );
    // An unattainable pinpointing threshold is a failed check, not an error.
    let strict = causalrep(
        dir,
        &[
            "pns",
            "measure",
            "--data",
            "toy.csv",
            "--rep",
            "rep.json",
            "--k",
            "1",
            "--threshold",
            "1e-9",
            "--out",
            "strict.json",
        ],
    );
    assert_eq!(strict.status.code(), Some(1));
}

#[test]
fn ppca_fit_and_check() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["synth", "pixel-linear", "--seed", "2", "--out", "pix.csv"]);
    ok(
        dir,
        &["ppca", "fit", "--data", "pix.csv", "--k", "1", "--out", "fit.json"],
    );
    ok(dir, &["ppca", "check", "--fit", "fit.json", "--threshold", "0.01"]);
    let loose = causalrep(dir, &["ppca", "check", "--fit", "fit.json", "--threshold", "1e-6"]);
    assert_eq!(loose.status.code(), Some(1));
}

#[test]
fn ioss_score_and_autoencoder() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(
        dir,
        &[
            "synth",
            "factor-mixture",
            "--n",
            "300",
            "--levels",
            "3",
            "--m",
            "6",
            "--out",
            "mix.csv",
        ],
    );
    assert!(dir.join("mix.factors.csv").exists());
    ok(
        dir,
        &[
            "ioss",
            "score",
            "--data",
            "mix.factors.csv",
            "--exact",
            "--out",
            "exact.json",
        ],
    );
    assert_eq!(json(&dir.join("exact.json"))["exact"], 0.0);
    ok(
        dir,
        &[
            "ioss",
            "score",
            "--data",
            "mix.csv",
            "--k-draws",
            "5000",
            "--out",
            "score.json",
        ],
    );
    ok(
        dir,
        &[
            "ioss",
            "train",
            "--data",
            "mix.csv",
            "--d",
            "3",
            "--lambda",
            "10",
            "--iterations",
            "20",
            "--out",
            "ae.json",
            "--codes-out",
            "codes.csv",
        ],
    );
    assert!(dir.join("codes.csv").exists());
}

#[test]
fn experiment_manifest_replays_bitwise() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["experiment", "poc-sweep", "--out", "sweep.json"]);
    let manifest_path = dir.join("sweep.json.manifest.json");
    let manifest = RunManifest::read(&manifest_path).unwrap();
    assert_eq!(manifest.outputs.len(), 2);

    let replay = ok(dir, &["replay", "--from", "sweep.json.manifest.json"]);
    assert_eq!(replay.matches("[MATCH]").count(), 2, "{replay}");

    // A recorded digest that no longer matches makes the replay fail.
    let mut tampered = manifest.clone();
    tampered.outputs[0].sha256 = "0".repeat(64);
    tampered.write(dir.join("bad.manifest.json")).unwrap();
    let out = causalrep(dir, &["replay", "--from", "bad.manifest.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("[DIFFER]"));
}

#[test]
fn report_exit_status_follows_assertions() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["--no-manifest", "experiment", "poc-sweep", "--out", "a.json"]);
    ok(dir, &["report", "a.json", "--out", "report.txt"]);

    let mut v = json(&dir.join("a.json"));
    v["assertions"][0]["passed"] = serde_json::Value::Bool(false);
    std::fs::write(dir.join("b.json"), v.to_string()).unwrap();
    assert_eq!(causalrep(dir, &["report", "a.json", "b.json"]).status.code(), Some(1));
}

#[test]
fn usage_and_input_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(causalrep(dir, &["no-such-command"]).status.code(), Some(2));
    let missing = causalrep(
        dir,
        &["ppca", "fit", "--data", "absent.csv", "--k", "1", "--out", "f.json"],
    );
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("absent.csv"));
    assert!(!dir.join("f.json").exists());
    assert_eq!(causalrep(dir, &["--help"]).status.code(), Some(0));
}
