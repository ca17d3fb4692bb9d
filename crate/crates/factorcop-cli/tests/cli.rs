//! End-to-end checks of the command-line interface: exit codes, output
//! artifacts and byte-level reproducibility.

use std::path::Path;
use std::process::Command;

fn factorcop() -> Command {
    Command::new(env!("CARGO_BIN_EXE_factorcop"))
}

fn tmp_dir(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("factorcop-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn simulate_is_byte_reproducible() {
    let dir = tmp_dir("sim");
    let out1 = dir.join("a.csv");
    let out2 = dir.join("b.csv");
    for out in [&out1, &out2] {
        let status = factorcop()
            .args([
                "simulate",
                "--preset",
                "gamma-1f-gauss",
                "--m",
                "40",
                "--seed",
                "7",
                "--out",
            ])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = std::fs::read(&out1).unwrap();
    let b = std::fs::read(&out2).unwrap();
    assert_eq!(a, b);
    assert!(dir.join("manifest.json").exists());
}

#[test]
fn fit_writes_artifacts_and_recovers_dependence() {
    let dir = tmp_dir("fit");
    let data = dir.join("data.csv");
    assert!(factorcop()
        .args([
            "simulate",
            "--preset",
            "normal-1f-gauss",
            "--m",
            "250",
            "--seed",
            "11",
            "--out"
        ])
        .arg(&data)
        .status()
        .unwrap()
        .success());
    let out = dir.join("fit");
    let status = factorcop()
        .args(["fit", "--data"])
        .arg(&data)
        .args(["--response", "normal", "--col-x", "x1,x2,t", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    for artifact in [
        "marginal_fit.json",
        "factor_fit.json",
        "godambe.json",
        "summary.txt",
        "manifest.json",
    ] {
        assert!(out.join(artifact).exists(), "{artifact} missing");
    }
    let factor: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("factor_fit.json")).unwrap())
            .unwrap();
    let rho1 = factor["rho1"].as_f64().unwrap();
    assert!((rho1 - 0.5).abs() < 0.1, "rho1 = {rho1}");
    // documented JSON surface
    for key in [
        "spec", "rho1", "se", "loglik", "aic", "bic", "quad", "n_eval", "warnings",
    ] {
        assert!(factor.get(key).is_some(), "factor_fit.json lacks `{key}`");
    }
    let marginal: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("marginal_fit.json")).unwrap())
            .unwrap();
    for key in [
        "family",
        "beta",
        "dispersion",
        "thresholds",
        "se",
        "loglik",
        "converged",
    ] {
        assert!(
            marginal.get(key).is_some(),
            "marginal_fit.json lacks `{key}`"
        );
    }
}

#[test]
fn missing_file_exits_2() {
    let status = factorcop()
        .args([
            "fit",
            "--data",
            "/nonexistent/nope.csv",
            "--response",
            "gamma",
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn degenerate_data_exits_3() {
    // ordinal data missing a category: threshold escapes, convergence error
    let dir = tmp_dir("degenerate");
    let data = dir.join("flat.csv");
    std::fs::write(&data, "id,time,y\nA,1,1\nA,2,1\nB,1,1\nB,2,1\n").unwrap();
    let status = factorcop()
        .args(["fit", "--data"])
        .arg(&data)
        .args(["--response", "ordinal", "--K", "3"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn mc_study_rejects_single_replication() {
    let out = tmp_dir("mc-n1");
    let output = factorcop()
        .args([
            "mc-study",
            "--preset",
            "gamma-1f-gauss",
            "--m",
            "30",
            "--N",
            "1",
            "--out",
        ])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(err.contains("N >= 2"), "stderr: {err}");
}

#[test]
fn mc_study_outputs_are_deterministic_across_job_counts() {
    let run = |jobs: &str, name: &str| -> Vec<u8> {
        let out = tmp_dir(name);
        assert!(factorcop()
            .args([
                "mc-study",
                "--preset",
                "normal-1f-gauss",
                "--m",
                "60",
                "--N",
                "6",
                "--seed",
                "3",
                "--jobs",
                jobs,
                "--out",
            ])
            .arg(&out)
            .status()
            .unwrap()
            .success());
        std::fs::read(out.join("mc_report.csv")).unwrap()
    };
    let a = run("1", "mc-j1");
    let b = run("3", "mc-j3");
    assert_eq!(a, b);
}

#[test]
fn unknown_preset_is_a_data_error() {
    let out = tmp_dir("badpreset");
    let status = factorcop()
        .args(["simulate", "--preset", "weibull-3f-clayton", "--out"])
        .arg(out.join("x.csv"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn simulated_csv_has_documented_columns() {
    let dir = tmp_dir("roundtrip");
    let data = dir.join("d.csv");
    assert!(factorcop()
        .args([
            "simulate",
            "--preset",
            "ordinal-1f-gauss",
            "--m",
            "50",
            "--seed",
            "5",
            "--out"
        ])
        .arg(&data)
        .status()
        .unwrap()
        .success());
    let head = std::fs::read_to_string(&data).unwrap();
    assert!(head.starts_with("id,time,y,x1,x2,t"));
    assert!(Path::new(&data).exists());
}
