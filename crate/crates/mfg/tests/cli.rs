//! End-to-end checks of the `mfg` binary: exit codes, artifact layout,
//! reproducibility, and the report pipeline.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mfg_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mfg"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn trace_header(dir: &Path) -> String {
    let trace = fs::read_to_string(dir.join("trace.csv")).unwrap();
    trace.lines().next().unwrap().to_string()
}

const SMALL_EXACT: &str = "num_cells = 10\nhorizon = 20\nnum_iterations = 5\nseed = 7\n";

const SMALL_PERTURBED: &str = "num_cells = 10\nhorizon = 20\nnum_iterations = 6\nseed = 7\n\
solver = perturbed\ncorruption_scale = 0.5\ncorruption_exponent = 2.0\n";

#[test]
fn exact_run_writes_the_documented_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "run.conf", SMALL_EXACT);
    let out_dir = tmp.path().join("run");
    let output = mfg_bin()
        .args(["exact-fp", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(output.status.success(), "stderr: {}", stderr_of(&output));
    let stdout = stdout_of(&output);
    assert!(stdout.contains("5 iterations in"), "stdout: {stdout}");
    assert!(stdout.contains("final exploitability"), "stdout: {stdout}");
    for file in ["trace.csv", "final_flow.csv", "final_policy.csv", "manifest.txt"] {
        assert!(out_dir.join(file).is_file(), "missing {file}");
    }
    assert_eq!(
        trace_header(&out_dir),
        "n,exploitability,approx_exploitability,learning_error,avg_flow_step,br_flow_step,\
         exact_vs_learned_flow,l2_density_error,l2_control_error"
    );
    let trace = fs::read_to_string(out_dir.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 6, "header plus one row per iteration");
}

#[test]
fn identical_configs_and_seeds_give_byte_identical_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "run.conf", SMALL_PERTURBED);
    let dirs = [tmp.path().join("a"), tmp.path().join("b")];
    for dir in &dirs {
        let output = mfg_bin()
            .args(["approx-fp", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(dir)
            .output()
            .unwrap();
        assert!(output.status.success(), "stderr: {}", stderr_of(&output));
    }
    for file in ["trace.csv", "final_flow.csv", "final_policy.csv"] {
        let a = fs::read(dirs[0].join(file)).unwrap();
        let b = fs::read(dirs[1].join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
}

#[test]
fn seed_override_changes_the_run_and_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "run.conf", SMALL_PERTURBED);
    let dirs = [tmp.path().join("a"), tmp.path().join("b")];
    for (dir, seed) in dirs.iter().zip(["11", "12"]) {
        let output = mfg_bin()
            .args(["approx-fp", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(dir)
            .args(["--seed", seed])
            .output()
            .unwrap();
        assert!(output.status.success(), "stderr: {}", stderr_of(&output));
    }
    let a = fs::read(dirs[0].join("trace.csv")).unwrap();
    let b = fs::read(dirs[1].join("trace.csv")).unwrap();
    assert_ne!(a, b, "different seeds must change a perturbed run");
    let manifest = fs::read_to_string(dirs[1].join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed = 12"), "manifest: {manifest}");
}

#[test]
fn diagnostics_off_drops_solver_quality_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "run.conf", SMALL_PERTURBED);
    let out_dir = tmp.path().join("run");
    let output = mfg_bin()
        .args(["approx-fp", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out_dir)
        .args(["--diagnostics", "off"])
        .output()
        .unwrap();
    assert!(output.status.success(), "stderr: {}", stderr_of(&output));
    assert_eq!(
        trace_header(&out_dir),
        "n,approx_exploitability,avg_flow_step,br_flow_step,l2_density_error,l2_control_error"
    );
    let stdout = stdout_of(&output);
    assert!(stdout.contains("diagnostics off"), "stdout: {stdout}");
}

#[test]
fn exact_runs_keep_diagnostics_even_when_switched_off() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "run.conf", SMALL_EXACT);
    let out_dir = tmp.path().join("run");
    let output = mfg_bin()
        .args(["exact-fp", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out_dir)
        .args(["--diagnostics", "off"])
        .output()
        .unwrap();
    assert!(output.status.success(), "stderr: {}", stderr_of(&output));
    let header = trace_header(&out_dir);
    assert!(
        header.contains("exploitability,") && header.contains("learning_error"),
        "exact traces come with the full diagnostics for free, got: {header}"
    );
}

#[test]
fn invalid_config_fails_with_a_diagnostic_on_stderr() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "bad.conf", "num_iterations = 0\n");
    let output = mfg_bin()
        .args(["exact-fp", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(tmp.path().join("run"))
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = stderr_of(&output);
    assert!(stderr.contains("num_iterations must be ≥ 1"), "stderr: {stderr}");
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "bad.conf", "num_cells = 10\nnum_celsl = 12\n");
    let output = mfg_bin()
        .args(["exact-fp", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(tmp.path().join("run"))
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = stderr_of(&output);
    assert!(stderr.contains("num_celsl"), "stderr: {stderr}");
}

#[test]
fn report_builds_comparison_panels_from_a_finished_run() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "run.conf",
        "num_cells = 20\nhorizon = 60\nnum_iterations = 20\nseed = 3\n",
    );
    let out_dir = tmp.path().join("run");
    let run = mfg_bin()
        .args(["exact-fp", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(run.status.success(), "stderr: {}", stderr_of(&run));

    let report = mfg_bin().args(["report", "--out"]).arg(&out_dir).output().unwrap();
    assert!(report.status.success(), "stderr: {}", stderr_of(&report));
    for file in [
        "density_vs_closed_form.csv",
        "control_vs_closed_form.csv",
        "l2_density_by_iteration.csv",
        "l2_control_by_iteration.csv",
        "theorem2_report.txt",
    ] {
        assert!(out_dir.join(file).is_file(), "missing {file}");
    }
    let stdout = stdout_of(&report);
    assert!(stdout.contains("fitted bounds hold on holdout: true"), "stdout: {stdout}");
}

#[test]
fn report_on_a_missing_directory_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let output = mfg_bin()
        .args(["report", "--out"])
        .arg(tmp.path().join("nowhere"))
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(stderr_of(&output).starts_with("error:"));
}
