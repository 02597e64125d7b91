//! Black-box tests against the compiled binary: happy-path pipeline,
//! reproducibility of artifacts, and the exit-code contract.

use std::path::Path;
use std::process::{Command, Output};

fn gridfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridfuse"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code present")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

#[test]
fn generate_impute_dsse_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let day = dir.path().join("day");
    let out = gridfuse(&["generate", "--seed", "3", "--out-dir", day.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let measurements = day.join("measurements.csv");
    assert!(measurements.exists());
    assert!(day.join("truth.csv").exists());

    let imputed = dir.path().join("imputed.csv");
    let out = gridfuse(&[
        "impute",
        "--input",
        measurements.to_str().unwrap(),
        "--out",
        imputed.to_str().unwrap(),
        "--method",
        "linear",
        "--fraction",
        "0.4",
        "--grid-step",
        "900",
        "--seed",
        "3",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let body = read(&imputed);
    let mut lines = body.lines();
    assert_eq!(lines.next(), Some("task_id,timestamp_s,mean,std"));
    assert!(lines.next().is_some(), "imputed CSV has data rows");

    let states = dir.path().join("states.csv");
    let out = gridfuse(&[
        "dsse",
        "--input",
        measurements.to_str().unwrap(),
        "--out",
        states.to_str().unwrap(),
        "--method",
        "linear",
        "--fad",
        "0.9",
        "--time",
        "36000",
        "--seed",
        "3",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let body = read(&states);
    assert!(body.starts_with("bus_id,re_v,im_v,v_mag,re_s,im_s,consistency_residual"));
    // one row per bus of the built-in feeder
    assert_eq!(body.lines().count(), 1 + 37);
}

#[test]
fn sweep_artifacts_are_reproducible_and_plottable() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out_dir in [&a, &b] {
        let out = gridfuse(&[
            "sweep",
            "--kind",
            "imputation",
            "--seed",
            "5",
            "--trials",
            "1",
            "--fractions",
            "0.6,0.2",
            "--out-dir",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let csv_a = read(&a.join("imputation.csv"));
    let csv_b = read(&b.join("imputation.csv"));
    assert_eq!(csv_a, csv_b, "same seed must give byte-identical results");
    assert!(a.join("imputation.txt").exists());

    let svg = dir.path().join("plot.svg");
    let out = gridfuse(&[
        "plot",
        "--input",
        a.join("imputation.csv").to_str().unwrap(),
        "--out",
        svg.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let body = read(&svg);
    assert!(body.starts_with("<svg"));
    assert!(body.contains("polyline"));
}

#[test]
fn usage_errors_exit_with_one() {
    let out = gridfuse(&["frobnicate"]);
    assert_eq!(code(&out), 1);
    assert!(!out.stderr.is_empty());

    let out = gridfuse(&["generate", "--no-such-flag", "--out-dir", "x"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--no-such-flag"));
}

#[test]
fn help_and_version_exit_with_zero() {
    let out = gridfuse(&["--help"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("impute"));
    let out = gridfuse(&["--version"]);
    assert_eq!(code(&out), 0);
}

#[test]
fn missing_input_file_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = gridfuse(&[
        "impute",
        "--input",
        dir.path().join("nope.csv").to_str().unwrap(),
        "--out",
        dir.path().join("out.csv").to_str().unwrap(),
        "--method",
        "linear",
    ]);
    assert_eq!(code(&out), 1);
    assert!(!out.stderr.is_empty());

    let out = gridfuse(&[
        "generate",
        "--feeder",
        dir.path().join("nope.json").to_str().unwrap(),
        "--out-dir",
        dir.path().join("day").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn seed_env_var_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let out = Command::new(env!("CARGO_BIN_EXE_gridfuse"))
        .env("GRIDFUSE_SEED", "77")
        .args(["generate", "--out-dir", a.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let out = gridfuse(&["generate", "--seed", "77", "--out-dir", b.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(
        read(&a.join("measurements.csv")),
        read(&b.join("measurements.csv"))
    );
}
