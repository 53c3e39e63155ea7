//! Exit-code and workspace contracts of the command-line interface.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(rel)
}

fn graphloom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphloom"))
        .args(args)
        .env_remove("GRAPHLOOM_WORKSPACE")
        .output()
        .expect("binary runs")
}

fn run_in(workspace: &Path, extra: &[&str]) -> Output {
    let purpose = fixture("ehr/purpose.toml");
    let mut args = vec![
        "run",
        "--purpose",
        purpose.to_str().unwrap(),
        "--workspace",
        workspace.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    graphloom(&args)
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("exit code")
}

#[test]
fn full_run_exits_zero_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let output = run_in(dir.path(), &[]);
    assert_eq!(exit_code(&output), 0, "{output:?}");
    for artifact in [
        "inception/gate.toml",
        "inception/elements.toml",
        "inception/selection.toml",
        "modeling/model.toml",
        "modeling/model.txt",
        "alignment/etg.toml",
        "integration/eg.nt",
        "integration/quality.toml",
        "summary.toml",
    ] {
        assert!(dir.path().join(artifact).exists(), "missing {artifact}");
    }
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("inception    pass"));
    assert!(stdout.contains("integration  pass"));
    // lock released after the run
    assert!(!dir.path().join(".lock").exists());

    // re-running on the same workspace and inputs is byte-identical
    let before = std::fs::read(dir.path().join("integration/eg.nt")).unwrap();
    let summary_before = std::fs::read(dir.path().join("summary.toml")).unwrap();
    let output = run_in(dir.path(), &[]);
    assert_eq!(exit_code(&output), 0);
    assert_eq!(std::fs::read(dir.path().join("integration/eg.nt")).unwrap(), before);
    assert_eq!(
        std::fs::read(dir.path().join("summary.toml")).unwrap(),
        summary_before
    );
}

#[test]
fn phase_commands_chain_and_honor_ordering() {
    let dir = tempfile::tempdir().unwrap();
    let purpose = fixture("ehr/purpose.toml");
    let ws = dir.path().to_str().unwrap();

    // out of order: integrate before anything else
    let output = graphloom(&[
        "phase",
        "integrate",
        "--purpose",
        purpose.to_str().unwrap(),
        "--workspace",
        ws,
    ]);
    assert_eq!(exit_code(&output), 1);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("missing artifact"), "{stderr}");

    for phase in ["inception", "model", "align", "integrate"] {
        let output = graphloom(&[
            "phase",
            phase,
            "--purpose",
            purpose.to_str().unwrap(),
            "--workspace",
            ws,
        ]);
        assert_eq!(exit_code(&output), 0, "{phase}: {output:?}");
    }
    assert!(dir.path().join("integration/eg.nt").exists());

    let output = graphloom(&["report", "--workspace", ws]);
    assert_eq!(exit_code(&output), 0);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("gate history"));
    assert!(stdout.contains("integration"));
}

#[test]
fn failing_gate_in_single_phase_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let purpose = fixture("failing/no_coverage.toml");
    let output = graphloom(&[
        "phase",
        "inception",
        "--purpose",
        purpose.to_str().unwrap(),
        "--workspace",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 2, "{output:?}");
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("FAIL"));
}

#[test]
fn overextended_model_fails_the_modeling_gate() {
    let dir = tempfile::tempdir().unwrap();
    let purpose = fixture("failing/overextended/purpose.toml");
    let ws = dir.path().to_str().unwrap();
    let output = graphloom(&[
        "phase",
        "inception",
        "--purpose",
        purpose.to_str().unwrap(),
        "--workspace",
        ws,
    ]);
    assert_eq!(exit_code(&output), 0, "{output:?}");
    let output = graphloom(&[
        "phase",
        "model",
        "--purpose",
        purpose.to_str().unwrap(),
        "--workspace",
        ws,
    ]);
    assert_eq!(exit_code(&output), 2, "{output:?}");
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("extensiveness"), "{stdout}");
    assert!(dir.path().join("modeling/gate.toml").exists());
}

#[test]
fn exhausted_backtracking_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let purpose = fixture("failing/no_coverage.toml");
    let output = graphloom(&[
        "run",
        "--purpose",
        purpose.to_str().unwrap(),
        "--workspace",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 3, "{output:?}");
    let summary = std::fs::read_to_string(dir.path().join("summary.toml")).unwrap();
    assert!(summary.contains("outcome = \"exhausted\""));

    // the consolidated report carries the backtrack chain
    let output = graphloom(&["report", "--workspace", dir.path().to_str().unwrap()]);
    assert_eq!(exit_code(&output), 0);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("backtracking exhausted"), "{stdout}");
    assert!(stdout.contains("-> backtrack to inception"), "{stdout}");
}

#[test]
fn threshold_override_file_drives_the_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let override_path = dir.path().join("thresholds.toml");
    std::fs::write(&override_path, "sparsity_min = 0.99\n").unwrap();

    let ws_fail = dir.path().join("ws_fail");
    let output = run_in(
        &ws_fail,
        &["--thresholds-override", override_path.to_str().unwrap()],
    );
    assert_eq!(exit_code(&output), 3, "{output:?}");

    // the operator corrects the threshold file and re-invokes
    std::fs::write(&override_path, "sparsity_min = 0.05\n").unwrap();
    let ws_pass = dir.path().join("ws_pass");
    let output = run_in(
        &ws_pass,
        &["--thresholds-override", override_path.to_str().unwrap()],
    );
    assert_eq!(exit_code(&output), 0, "{output:?}");
}

#[test]
fn seed_only_validates_without_running() {
    let dir = tempfile::tempdir().unwrap();
    let output = run_in(dir.path(), &["--seed-only"]);
    assert_eq!(exit_code(&output), 0);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("purpose ok: 3 CQs, 4 datasets, 2 ontologies"));
    // nothing was written
    assert!(!dir.path().join("summary.toml").exists());

    let broken = dir.path().join("broken.toml");
    std::fs::write(&broken, "description = \"x\"\nnot toml at all").unwrap();
    let output = graphloom(&[
        "run",
        "--purpose",
        broken.to_str().unwrap(),
        "--workspace",
        dir.path().to_str().unwrap(),
        "--seed-only",
    ]);
    assert_eq!(exit_code(&output), 1);
}

#[test]
fn locked_workspace_rejects_concurrent_invocations() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join(".lock"), "").unwrap();
    let output = run_in(dir.path(), &[]);
    assert_eq!(exit_code(&output), 1);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("locked"), "{stderr}");
}

#[test]
fn report_on_empty_workspace_errors() {
    let dir = tempfile::tempdir().unwrap();
    let output = graphloom(&["report", "--workspace", dir.path().to_str().unwrap()]);
    assert_eq!(exit_code(&output), 1);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("no phase artifacts"), "{stderr}");
}

#[test]
fn allow_unaligned_with_no_ontologies_completes() {
    let dir = tempfile::tempdir().unwrap();
    // strip the ontology list from the purpose
    let src = std::fs::read_to_string(fixture("ehr/purpose.toml")).unwrap();
    let src = src.replace(
        "ontologies = [\n  \"ontologies/fhir_like.toml\",\n  \"ontologies/clinical_common.toml\",\n]\n",
        "",
    );
    // keep relative data paths working
    let purpose_path = fixture("ehr").join("purpose_unaligned_tmp.toml");
    std::fs::write(&purpose_path, src).unwrap();
    let output = graphloom(&[
        "run",
        "--purpose",
        purpose_path.to_str().unwrap(),
        "--workspace",
        dir.path().to_str().unwrap(),
        "--allow-unaligned",
    ]);
    std::fs::remove_file(&purpose_path).unwrap();
    assert_eq!(exit_code(&output), 0, "{output:?}");
    let etg = std::fs::read_to_string(dir.path().join("alignment/etg.toml")).unwrap();
    assert!(etg.contains("provenance = \"model\""));
    assert!(!etg.contains("provenance = \"ontology:"));
}
