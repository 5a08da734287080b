//! End-to-end tests of the `ghzrig` binary: pipelines, determinism, and
//! machine-readable error codes.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ghzrig"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn tmp(name: &str) -> PathBuf {
    let mut p = std::env::temp_dir();
    p.push(format!("ghzrig_cli_{}_{name}", std::process::id()));
    p
}

#[test]
fn ideal_then_verify_reports_perfect_score() {
    let path = tmp("ideal1.json");
    let out = run(&["ideal", "--n", "1", "--out", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));

    let out = run(&["verify", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("winning_probability 1.000000000"), "{text}");
    assert!(text.contains("validation ok"), "{text}");
    std::fs::remove_file(path).ok();
}

#[test]
fn verify_writes_a_full_json_report() {
    let path = tmp("ideal2.json");
    let report = tmp("report2.json");
    run(&["ideal", "--n", "2", "--out", path.to_str().unwrap()]);
    let out = run(&[
        "verify",
        path.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["validation"]["ok"], true);
    assert!(json["relations"]["keyineq"]["entries"].is_array());
    assert!(
        json["relations"]["multi_pauli"]["max_residual"]
            .as_f64()
            .unwrap()
            < 1e-9
    );
    std::fs::remove_file(path).ok();
    std::fs::remove_file(report).ok();
}

#[test]
fn classical_value_prints_three_quarters() {
    let out = run(&["classical", "--n", "1"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).trim(), "0.75");
}

#[test]
fn sweep_is_deterministic_and_has_a_zero_noise_row() {
    let a = tmp("sweep_a.csv");
    let b = tmp("sweep_b.csv");
    for path in [&a, &b] {
        let out = run(&[
            "sweep",
            "--n",
            "2",
            "--noise",
            "0:0.3:0.05",
            "--seed",
            "42",
            "--format",
            "csv",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let text_a = std::fs::read(&a).unwrap();
    let text_b = std::fs::read(&b).unwrap();
    assert_eq!(text_a, text_b, "sweep output must be byte-identical");

    let text = String::from_utf8(text_a).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 8, "header + 7 rows: {text}");
    assert!(lines[0].starts_with("theta,epsilon,"));
    let zero_row: Vec<f64> = lines[1]
        .split(',')
        .map(|v| v.parse::<f64>().unwrap())
        .collect();
    assert_eq!(zero_row[0], 0.0);
    assert_eq!(zero_row[1], 0.0, "epsilon at theta=0");
    assert!(zero_row[4] < 1e-12, "extraction residual at theta=0");
    std::fs::remove_file(a).ok();
    std::fs::remove_file(b).ok();
}

#[test]
fn extract_reports_unit_fidelity_for_the_ideal_strategy() {
    let path = tmp("ideal_x.json");
    let result = tmp("extraction.json");
    run(&["ideal", "--n", "1", "--out", path.to_str().unwrap()]);
    let out = run(&[
        "extract",
        path.to_str().unwrap(),
        "--out",
        result.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("fidelity 1.000000000"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&result).unwrap()).unwrap();
    assert!(json["residual"].as_f64().unwrap() < 1e-9);
    assert!(json["extracted"].is_array());
    assert_eq!(json["weights"].as_array().unwrap().len(), 8);
    std::fs::remove_file(path).ok();
    std::fs::remove_file(result).ok();
}

#[test]
fn simulate_is_reproducible() {
    let path = tmp("ideal_s.json");
    run(&["ideal", "--n", "1", "--out", path.to_str().unwrap()]);
    let args = [
        "simulate",
        path.to_str().unwrap(),
        "--rounds",
        "2000",
        "--seed",
        "7",
    ];
    let first = run(&args);
    let second = run(&args);
    assert!(first.status.success());
    assert_eq!(stdout(&first), stdout(&second));
    assert!(stdout(&first).contains("frequency 1.000000000"));
    std::fs::remove_file(path).ok();
}

#[test]
fn error_paths_use_machine_readable_codes() {
    // missing file: bad config
    let out = run(&["verify", "/nonexistent/strategy.json"]);
    assert_eq!(out.status.code(), Some(2));
    let diag: serde_json::Value = serde_json::from_str(stderr(&out).trim()).unwrap();
    assert_eq!(diag["code"], 2);

    // malformed file: schema violation
    let path = tmp("broken.json");
    std::fs::write(&path, "{\"n\": 1, \"dims\": {}}").unwrap();
    let out = run(&["verify", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let diag: serde_json::Value = serde_json::from_str(stderr(&out).trim()).unwrap();
    assert_eq!(diag["code"], 3);
    std::fs::remove_file(path).ok();

    // invalid grid: bad config
    let out = run(&["sweep", "--n", "1", "--noise", "0:0.3:0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).trim().lines().count() == 1);

    // dimension ceiling: code 4
    let out = bin()
        .args(["ideal", "--n", "3"])
        .env("GHZRIG_DIM_CEILING", "16")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
    let diag: serde_json::Value = serde_json::from_str(stderr(&out).trim()).unwrap();
    assert_eq!(diag["code"], 4);
}

#[test]
fn sweep_json_format_matches_csv_values() {
    let out = run(&["sweep", "--n", "1", "--noise", "0.1:0.1:0.1"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let row = &rows.as_array().unwrap()[0];
    let eps = row["epsilon"].as_f64().unwrap();
    let residual = row["extraction_residual"].as_f64().unwrap();
    assert!(eps > 0.0 && residual > 0.0);
    // residual/√ε is the pinned √2 of the rotation family
    assert!((residual / eps.sqrt() - std::f64::consts::SQRT_2).abs() < 1e-6);
}
