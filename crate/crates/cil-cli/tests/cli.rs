//! End-to-end tests of the `cil` binary: run, report, compare, selftest,
//! exit codes and artifact round trips.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cil_cli::RunArtifact;

fn cil(args: &[&str], output_root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cil"))
        .args(args)
        .env("CIL_OUTPUT_ROOT", output_root)
        .output()
        .expect("binary should launch")
}

fn write_blob_config(dir: &Path, name: &str, method: &str) -> std::path::PathBuf {
    let path = dir.join(format!("{name}.toml"));
    fs::write(
        &path,
        format!(
            r#"
name = "{name}"
method = "{method}"
k_pre = 6
memory = 120
seeds = [0, 1]

[stream]
kind = "blobs"
tasks = 3
classes_per_task = 2
dim = 8
separation = 8.0
samples_per_class = 40
stream_seed = 7

[train]
epochs_per_task = 10
new_batch = 16
memory_batch = 16
"#
        ),
    )
    .unwrap();
    path
}

#[test]
fn run_report_and_compare_round_trip() {
    let work = tempfile::tempdir().unwrap();
    let root = work.path().join("out");
    let rpc_cfg = write_blob_config(work.path(), "rpc-blobs", "rpc");
    let exp_cfg = write_blob_config(work.path(), "expanding-blobs", "expanding");

    for cfg in [&rpc_cfg, &exp_cfg] {
        let out = cil(&["run", cfg.to_str().unwrap()], &root);
        assert!(
            out.status.success(),
            "run failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }

    // Artifacts exist, load and self-validate.
    let rpc_dir = root.join("rpc-blobs");
    let artifact = RunArtifact::load(&rpc_dir).unwrap();
    assert_eq!(artifact.runs.len(), 2);
    assert_eq!(artifact.config.name, "rpc-blobs");

    // Single-directory report.
    let out = cil(&["report", rpc_dir.to_str().unwrap()], &root);
    assert!(out.status.success());
    for file in ["accuracy.csv", "evolution.csv", "chart.svg"] {
        assert!(rpc_dir.join(file).exists(), "missing {file}");
    }

    // Reporting again must be byte-identical (idempotent).
    let before: Vec<Vec<u8>> = ["accuracy.csv", "evolution.csv", "chart.svg"]
        .iter()
        .map(|f| fs::read(rpc_dir.join(f)).unwrap())
        .collect();
    let out = cil(&["report", rpc_dir.to_str().unwrap()], &root);
    assert!(out.status.success());
    let after: Vec<Vec<u8>> = ["accuracy.csv", "evolution.csv", "chart.svg"]
        .iter()
        .map(|f| fs::read(rpc_dir.join(f)).unwrap())
        .collect();
    assert_eq!(before, after);

    // Multi-run report over the shared root gathers both experiments.
    let out = cil(&["report", root.to_str().unwrap()], &root);
    assert!(out.status.success());
    let combined = fs::read_to_string(root.join("accuracy.csv")).unwrap();
    assert!(combined.contains("rpc-blobs"));
    assert!(combined.contains("expanding-blobs"));
    let svg = fs::read_to_string(root.join("chart.svg")).unwrap();
    assert!(svg.contains("rpc-blobs") && svg.contains("expanding-blobs"));

    // Compare: paired per-seed deltas against the baseline (first dir).
    let out = cil(
        &[
            "compare",
            rpc_dir.to_str().unwrap(),
            root.join("expanding-blobs").to_str().unwrap(),
        ],
        &root,
    );
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with("seed,"), "unexpected header: {csv}");
    assert!(csv.contains("delta_expanding-blobs"));
    for row in [
        "mean",
        "std",
        "positive_deltas",
        "negative_deltas",
        "zero_deltas",
    ] {
        assert!(
            csv.contains(&format!("\n{row},")),
            "missing {row} row in:\n{csv}"
        );
    }
    // One line per seed plus header and five summary rows.
    assert_eq!(csv.trim_end().lines().count(), 1 + 2 + 5);
}

#[test]
fn comparing_a_run_with_itself_gives_zero_deltas() {
    let work = tempfile::tempdir().unwrap();
    let root = work.path().join("out");
    let cfg = write_blob_config(work.path(), "base", "rpc");
    assert!(cil(&["run", cfg.to_str().unwrap()], &root).status.success());

    // Same artifact under a second name so names stay distinct.
    let copy = root.join("copy");
    fs::create_dir_all(&copy).unwrap();
    let text = fs::read_to_string(root.join("base").join("artifact.json")).unwrap();
    fs::write(
        copy.join("artifact.json"),
        text.replace("\"base\"", "\"copy\""),
    )
    .unwrap();

    let out = cil(
        &[
            "compare",
            root.join("base").to_str().unwrap(),
            copy.to_str().unwrap(),
        ],
        &root,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = String::from_utf8(out.stdout).unwrap();
    let zero_row = csv
        .lines()
        .find(|l| l.starts_with("zero_deltas,"))
        .expect("zero_deltas row");
    assert!(zero_row.ends_with(",2"), "both seeds must tie: {zero_row}");
}

#[test]
fn config_problems_exit_with_code_2() {
    let work = tempfile::tempdir().unwrap();
    let root = work.path().join("out");

    // Missing file.
    let out = cil(&["run", "no-such-config.toml"], &root);
    assert_eq!(out.status.code(), Some(2));

    // Invalid TOML.
    let bad = work.path().join("bad.toml");
    fs::write(&bad, "name = [unclosed").unwrap();
    let out = cil(&["run", bad.to_str().unwrap()], &root);
    assert_eq!(out.status.code(), Some(2));

    // Validation failure: preallocated head smaller than the class count.
    let small = work.path().join("small.toml");
    fs::write(
        &small,
        r#"
name = "small"
method = "rpc"
k_pre = 4
memory = 10
seeds = [0]

[stream]
kind = "blobs"
tasks = 3
classes_per_task = 2
dim = 4
separation = 6.0
samples_per_class = 10
stream_seed = 1
"#,
    )
    .unwrap();
    let out = cil(&["run", small.to_str().unwrap()], &root);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("k_pre"));
}

#[test]
fn runtime_failures_exit_with_code_1() {
    let work = tempfile::tempdir().unwrap();
    let root = work.path().join("out");
    let cfg = work.path().join("missing-data.toml");
    fs::write(
        &cfg,
        r#"
name = "missing-data"
method = "rpc"
k_pre = 10
memory = 100
seeds = [0]

[stream]
kind = "split-mnist"
data = "no-such-dir"
"#,
    )
    .unwrap();
    let out = cil(&["run", cfg.to_str().unwrap()], &root);
    assert_eq!(out.status.code(), Some(1));

    // Reporting a directory with no artifacts is a runtime failure too.
    let empty = work.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    let out = cil(&["report", empty.to_str().unwrap()], &root);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn output_root_env_var_overrides_the_config() {
    let work = tempfile::tempdir().unwrap();
    let elsewhere = work.path().join("elsewhere");
    let cfg = write_blob_config(work.path(), "env-routed", "rpc");
    let out = cil(&["run", cfg.to_str().unwrap()], &elsewhere);
    assert!(out.status.success());
    assert!(elsewhere.join("env-routed").join("artifact.json").exists());
    // Nothing is written next to the config under the default "runs" root.
    assert!(!work.path().join("runs").exists());
}

#[test]
fn selftest_passes_and_prints_every_check() {
    let work = tempfile::tempdir().unwrap();
    let out = cil(&["selftest"], work.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in [
        "simplex-geometry",
        "gradient-check",
        "memory-balance",
        "metric-identity",
        "determinism-and-fixed-head",
        "forgetting-and-replay",
    ] {
        assert!(text.contains(name), "selftest output missing {name}");
    }
    assert!(text.contains("selftest passed"));
}
