//! End-to-end tests of the command-line binary: every subcommand, its
//! artifacts, the flag overrides, and the failure modes users actually
//! hit. All runs use deliberately tiny configurations.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_slt-lab"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary should spawn");
    assert!(
        out.status.success(),
        "`slt-lab {}` failed\nstdout: {}\nstderr: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
    out
}

fn run_err(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary should spawn");
    assert!(
        !out.status.success(),
        "`slt-lab {}` unexpectedly succeeded",
        args.join(" ")
    );
    out
}

/// A complete config sized for millisecond runs.
fn tiny_config(dir: &Path, mode: &str, extra: &str) -> PathBuf {
    let path = dir.join("config.toml");
    let text = format!(
        r#"
mode = "{mode}"
seed = 11
repetitions = 1
sparsities = [0.3]
test_fraction = 0.2
out_dir = "{out}"

[dataset]
kind = "shifted_relu"
n = 200

[architecture]
widths = [1, 8, 8, 1]

[prune]
annealing_levels = 2
epochs_per_level = 2

[train]
epochs = 3
{extra}
"#,
        out = dir.join("out").display(),
    );
    fs::write(&path, text).unwrap();
    path
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

// -------------------------------------------------------------------
// dataset
// -------------------------------------------------------------------

#[test]
fn dataset_writes_csv_sidecar_and_resolved_config() {
    let dir = TempDir::new().unwrap();
    let cfg = tiny_config(dir.path(), "train", "");
    run_ok(&["dataset", "--config", cfg.to_str().unwrap()]);

    let out = dir.path().join("out");
    let csv = fs::read_to_string(out.join("dataset.csv")).unwrap();
    assert_eq!(csv.lines().count(), 201, "header plus one row per sample");
    assert!(out.join("dataset.csv.json").exists(), "sidecar");
    assert!(out.join("config.resolved").exists());

    // Same seed, fresh directory: identical bytes.
    let dir2 = TempDir::new().unwrap();
    let cfg2 = tiny_config(dir2.path(), "train", "");
    run_ok(&["dataset", "--config", cfg2.to_str().unwrap()]);
    let csv2 = fs::read_to_string(dir2.path().join("out/dataset.csv")).unwrap();
    assert_eq!(csv, csv2);
}

#[test]
fn dataset_seed_override_changes_the_data() {
    let dir = TempDir::new().unwrap();
    let cfg = tiny_config(dir.path(), "train", "");
    run_ok(&["dataset", "--config", cfg.to_str().unwrap()]);
    let base = fs::read_to_string(dir.path().join("out/dataset.csv")).unwrap();

    let dir2 = TempDir::new().unwrap();
    let cfg2 = tiny_config(dir2.path(), "train", "");
    run_ok(&["dataset", "--config", cfg2.to_str().unwrap(), "--seed", "99"]);
    let other = fs::read_to_string(dir2.path().join("out/dataset.csv")).unwrap();
    assert_ne!(base, other);
}

// -------------------------------------------------------------------
// train
// -------------------------------------------------------------------

#[test]
fn train_saves_network_and_log() {
    let dir = TempDir::new().unwrap();
    let cfg = tiny_config(dir.path(), "train", "");
    let out = run_ok(&["train", "--config", cfg.to_str().unwrap()]);
    assert!(stdout(&out).contains("trained 3 epochs"));

    let outdir = dir.path().join("out");
    let log = fs::read_to_string(outdir.join("train_log.csv")).unwrap();
    let mut lines = log.lines();
    assert_eq!(lines.next(), Some("phase,epoch,train_loss,test_metric"));
    assert_eq!(lines.count(), 3);

    let saved: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(outdir.join("network.json")).unwrap()).unwrap();
    assert_eq!(saved["provenance"]["master_seed"], 11);
    assert_eq!(saved["widths"], serde_json::json!([1, 8, 8, 1]));
}

// -------------------------------------------------------------------
// prune
// -------------------------------------------------------------------

fn strip_last_column(csv: &str) -> String {
    csv.lines()
        .map(|line| match line.rfind(',') {
            Some(pos) => &line[..pos],
            None => line,
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn prune_writes_results_and_is_deterministic_modulo_timestamp() {
    let dir = TempDir::new().unwrap();
    let cfg = tiny_config(dir.path(), "prune", "");
    let out = run_ok(&["prune", "--config", cfg.to_str().unwrap()]);
    assert!(stdout(&out).contains("sparsity"), "aggregate table printed");

    let outdir = dir.path().join("out");
    let results = fs::read_to_string(outdir.join("results.csv")).unwrap();
    assert!(results.starts_with("kind,sparsity,repetition,seed,status"));
    assert!(outdir.join("results.csv.json").exists(), "sidecar");
    assert!(outdir.join("config.resolved").exists());

    let dir2 = TempDir::new().unwrap();
    let cfg2 = tiny_config(dir2.path(), "prune", "");
    run_ok(&["prune", "--config", cfg2.to_str().unwrap()]);
    let results2 = fs::read_to_string(dir2.path().join("out/results.csv")).unwrap();
    assert_eq!(strip_last_column(&results), strip_last_column(&results2));
}

#[test]
fn prune_sparsity_override_widens_the_sweep() {
    let dir = TempDir::new().unwrap();
    let cfg = tiny_config(dir.path(), "prune", "");
    run_ok(&[
        "prune",
        "--config",
        cfg.to_str().unwrap(),
        "--sparsity",
        "0.5,0.25",
    ]);
    let results = fs::read_to_string(dir.path().join("out/results.csv")).unwrap();
    let rows: Vec<&str> = results.lines().skip(1).collect();
    assert!(rows.iter().any(|r| r.starts_with("run,0.25,")));
    assert!(rows.iter().any(|r| r.starts_with("run,0.5,")));

    let resolved: toml::Value =
        toml::from_str(&fs::read_to_string(dir.path().join("out/config.resolved")).unwrap())
            .unwrap();
    let swept: Vec<f64> = resolved["sparsities"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_float().unwrap())
        .collect();
    assert_eq!(swept, vec![0.5, 0.25]);
}

#[test]
fn prune_flag_overrides_reach_the_resolved_config() {
    let dir = TempDir::new().unwrap();
    let cfg = tiny_config(dir.path(), "prune", "");
    run_ok(&[
        "prune",
        "--config",
        cfg.to_str().unwrap(),
        "--zero-bias",
        "--no-rescale",
    ]);
    let resolved = fs::read_to_string(dir.path().join("out/config.resolved")).unwrap();
    assert!(resolved.contains("zero_bias = true"));
    assert!(resolved.contains("rescale = false"));
}

// -------------------------------------------------------------------
// construct
// -------------------------------------------------------------------

#[test]
fn construct_builds_a_ticket_for_a_trained_network() {
    let dir = TempDir::new().unwrap();
    let train_cfg = tiny_config(dir.path(), "train", "");
    run_ok(&["train", "--config", train_cfg.to_str().unwrap()]);
    let target = dir.path().join("out/network.json");

    let extra = format!(
        "[construct]\nepsilon = 0.2\ndelta = 0.2\nc = 32.0\ntarget = \"{}\"\n",
        target.display()
    );
    let dir2 = TempDir::new().unwrap();
    let cfg = tiny_config(dir2.path(), "construct", &extra);
    let out = run_ok(&["construct", "--config", cfg.to_str().unwrap()]);
    assert!(stdout(&out).contains("mother widths"));
    assert!(stdout(&out).contains("sup error"));

    let outdir = dir2.path().join("out");
    assert!(outdir.join("mother.json").exists());
    assert!(outdir.join("plan.json").exists());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(outdir.join("report.json")).unwrap()).unwrap();
    let sup = report["report"]["sup_error"].as_f64().unwrap();
    let eps = report["report"]["epsilon"].as_f64().unwrap();
    assert!(sup <= eps, "sup error {sup} within budget {eps}");
    assert!(report["provenance"]["master_seed"].is_number());
}

#[test]
fn construct_without_a_target_fails_with_guidance() {
    let dir = TempDir::new().unwrap();
    let cfg = tiny_config(dir.path(), "construct", "");
    let out = run_err(&["construct", "--config", cfg.to_str().unwrap()]);
    assert!(stderr(&out).contains("construct.target"));
}

// -------------------------------------------------------------------
// verify
// -------------------------------------------------------------------

#[test]
fn verify_runs_all_checks_and_writes_reports() {
    let dir = TempDir::new().unwrap();
    let out = run_ok(&[
        "verify",
        "--out",
        dir.path().join("out").to_str().unwrap(),
        "--seed",
        "5",
    ]);
    let text = stdout(&out);
    for name in [
        "counterexample-const",
        "counterexample-exp",
        "factorization",
        "scaling-identity",
        "signal-moment-uniform",
        "signal-moment-normal",
        "signal-moment-looks-linear",
        "perturbation-budget",
        "construction",
    ] {
        assert!(text.contains(name), "missing check {name}:\n{text}");
        assert!(
            dir.path().join(format!("out/verify/{name}.json")).exists(),
            "missing report for {name}"
        );
    }
    let summary: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("out/verify/summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(
        summary["all_passed"], true,
        "all built-in checks pass: {summary}"
    );
}

// -------------------------------------------------------------------
// report
// -------------------------------------------------------------------

#[test]
fn report_summarizes_an_existing_sweep() {
    let dir = TempDir::new().unwrap();
    let cfg = tiny_config(dir.path(), "prune", "");
    let first = run_ok(&["prune", "--config", cfg.to_str().unwrap()]);
    let reported = run_ok(&["report", "--config", cfg.to_str().unwrap()]);
    // The same aggregate table both times.
    let table = |s: &str| {
        s.lines()
            .skip_while(|l| !l.starts_with("sparsity"))
            .take(2)
            .map(str::to_owned)
            .collect::<Vec<_>>()
    };
    assert_eq!(table(&stdout(&first)), table(&stdout(&reported)));
}

#[test]
fn report_without_results_fails() {
    let dir = TempDir::new().unwrap();
    let cfg = tiny_config(dir.path(), "prune", "");
    let out = run_err(&["report", "--config", cfg.to_str().unwrap()]);
    assert!(stderr(&out).contains("results.csv"));
}

// -------------------------------------------------------------------
// failure modes
// -------------------------------------------------------------------

#[test]
fn missing_config_file_fails_cleanly() {
    let out = run_err(&["train", "--config", "/nonexistent/config.toml"]);
    assert!(stderr(&out).contains("error"));
    assert!(stderr(&out).contains("/nonexistent/config.toml"));
}

#[test]
fn mismatched_architecture_is_rejected_before_training() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("config.toml");
    fs::write(
        &path,
        format!(
            r#"
mode = "train"
out_dir = "{}"

[dataset]
kind = "onion"
n = 100

[architecture]
widths = [1, 8, 1]
"#,
            dir.path().join("out").display()
        ),
    )
    .unwrap();
    let out = run_err(&["train", "--config", path.to_str().unwrap()]);
    assert!(stderr(&out).contains("inputs"));
}
