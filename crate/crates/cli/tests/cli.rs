//! Binary-level contract tests: exit codes, error messages, file handoff
//! between commands, and rerun determinism.

use std::path::Path;
use std::process::{Command, Output};

fn pdgen(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdgen"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).to_string()
}

#[test]
fn no_arguments_prints_usage_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let output = pdgen(&[], dir.path());
    assert!(!output.status.success());
    assert!(stderr(&output).contains("Usage"));
}

#[test]
fn missing_dataset_path_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let output = pdgen(&["build", "--data", "no-such-dir"], dir.path());
    assert!(!output.status.success());
    let message = stderr(&output);
    assert!(
        message.contains("no-such-dir"),
        "error should name the missing path, got: {message}"
    );
}

#[test]
fn invalid_simulate_config_is_rejected_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let output = pdgen(&["simulate", "--students", "0"], dir.path());
    assert!(!output.status.success());
    assert!(!dir.path().join("data").exists());
}

#[test]
fn unknown_backend_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let output = pdgen(&["simulate", "--backend", "psychic"], dir.path());
    assert!(!output.status.success());
    assert!(stderr(&output).contains("psychic"));
}

#[test]
fn remote_backend_without_endpoint_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    pdgen(
        &["simulate", "--students", "2", "--past", "4", "--test", "2"],
        dir.path(),
    );
    let output = pdgen(&["build", "--backend", "remote"], dir.path());
    assert!(!output.status.success());
    assert!(stderr(&output).contains("endpoint"));
}

#[test]
fn full_pipeline_is_composable_and_rerunnable() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("run.toml");
    std::fs::write(
        &config_path,
        r#"
[search]
seed = 7

[simulate]
n_students = 2
n_past = 6
n_test = 3
"#,
    )
    .unwrap();
    let config = config_path.to_str().unwrap();

    for (out, data) in [("out-a", "data-a"), ("out-b", "data-b")] {
        for command in ["simulate", "build", "generate", "evaluate"] {
            let output = pdgen(
                &[command, "--config", config, "--out", out, "--data", data],
                dir.path(),
            );
            assert!(
                output.status.success(),
                "{command} failed: {}",
                stderr(&output)
            );
        }
    }

    // The two runs are byte-identical on every pipeline output file.
    for file in [
        "prototypes/s001.json",
        "prototypes/s002.json",
        "generations/s001.jsonl",
        "generations/s002.jsonl",
        "evaluation.json",
    ] {
        let a = std::fs::read(dir.path().join("out-a").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("out-b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }

    // Manifests snapshot the effective config of each command.
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out-a/manifest-build.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["command"], "build");
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["backend_kind"], "scripted");
    assert_eq!(manifest["config"]["search"]["iterations"], 10);
}

#[test]
fn group_mode_runs_on_a_shared_test_corpus() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec![
            "simulate",
            "--students",
            "4",
            "--past",
            "6",
            "--test",
            "4",
            "--shared-test",
        ],
        vec!["build"],
        vec!["generate"],
        vec!["group", "--top-k", "3"],
    ] {
        let output = pdgen(&args, dir.path());
        assert!(
            output.status.success(),
            "{args:?} failed: {}",
            stderr(&output)
        );
    }
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out/group_report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["k"], 3);
    let questions = report["per_question"].as_array().unwrap();
    assert!(!questions.is_empty());
    for question in questions {
        let top = question["top_distractors"].as_array().unwrap();
        assert!(top.len() <= 3);
        let recall = question["recall"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&recall));
    }
}

#[test]
fn trace_export_writes_per_record_trees() {
    let dir = tempfile::tempdir().unwrap();
    pdgen(
        &["simulate", "--students", "1", "--past", "3", "--test", "2"],
        dir.path(),
    );
    let output = pdgen(&["build", "--trace-dir", "traces"], dir.path());
    assert!(output.status.success(), "{}", stderr(&output));
    let traces: Vec<_> = std::fs::read_dir(dir.path().join("traces"))
        .unwrap()
        .collect();
    assert_eq!(traces.len(), 3);
    let first = traces[0].as_ref().unwrap().path();
    let tree: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(first).unwrap()).unwrap();
    assert_eq!(tree["kind"], "reasoning");
    assert!(tree["visit_count"].as_u64().unwrap() >= 10);
    assert!(tree["children"].as_array().is_some());
}
