use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_greedy-dirty"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Vec<u8> {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap()
}

fn gen_file(dir: &Path, name: &str, args: &[&str]) -> String {
    let path = dir.join(name).to_str().unwrap().to_string();
    let mut full = vec!["gen"];
    full.extend_from_slice(args);
    full.extend_from_slice(&["--out", &path]);
    ok(&full);
    path
}

#[test]
fn gen_full_overlap_has_identical_supports() {
    let v = json(&ok(&[
        "gen", "--p", "16", "--r", "2", "--s", "2", "--kappa", "1.0", "--n", "12", "--seed", "7",
    ]));
    let beta = v["beta_star"].as_array().unwrap();
    assert_eq!(beta.len(), 16);
    let mut nonzero_rows = 0;
    for row in beta {
        let a = row[0].as_f64().unwrap() != 0.0;
        let b = row[1].as_f64().unwrap() != 0.0;
        assert_eq!(a, b);
        nonzero_rows += a as usize;
    }
    assert_eq!(nonzero_rows, 2);
    assert_eq!(v["tasks"][0]["X"].as_array().unwrap().len(), 12);
}

#[test]
fn gen_records_meta() {
    let v = json(&ok(&[
        "gen", "--p", "128", "--r", "2", "--s", "13", "--kappa", "0.3", "--n", "123", "--seed", "1",
    ]));
    assert_eq!(v["meta"]["kappa"].as_f64(), Some(0.3));
    assert_eq!(v["meta"]["s"].as_u64(), Some(13));
    assert_eq!(v["tasks"][1]["n"].as_u64(), Some(123));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(
        run(&["gen", "--kappa", "0.5", "--n", "3"]).status.code(),
        Some(2)
    );
    assert_eq!(
        run(&["gen", "--p", "10", "--kappa", "1.5", "--n", "3"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&[
            "sweep",
            "--p",
            "40",
            "--kappa",
            "0.5",
            "--theta-min",
            "2",
            "--theta-max",
            "1"
        ])
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn fit_recovers_noiseless_truth() {
    let dir = tempfile::tempdir().unwrap();
    let f = gen_file(
        dir.path(),
        "p.json",
        &[
            "--p",
            "40",
            "--s",
            "4",
            "--kappa",
            "0.5",
            "--n",
            "30",
            "--noise-variance",
            "0",
            "--seed",
            "3",
        ],
    );
    let v = json(&ok(&["fit", "--in", &f, "--epsilon", "1e-9"]));
    assert_eq!(v["exact_recovery"], Value::Bool(true));
    assert!(v["frobenius_error"].as_f64().unwrap() <= 1e-6);
    assert_eq!(v["termination"], "gain-below-threshold");

    let v = json(&ok(&["fit", "--in", &f, "--epsilon", "1e-9", "--no-rows"]));
    assert!(v["pattern"]["rows"].as_array().unwrap().is_empty());

    assert_eq!(
        run(&["fit", "--in", &f, "--nu", "1.5"]).status.code(),
        Some(2)
    );
}

#[test]
fn malformed_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"p\": 2, \"r\": 1, \"tasks\": [").unwrap();
    let out = run(&["fit", "--in", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.json"));
    let out = run(&[
        "fit",
        "--in",
        dir.path().join("absent.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_single_point() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    let out = run(&[
        "sweep",
        "--p",
        "40",
        "--kappa",
        "0.5",
        "--theta-min",
        "4",
        "--theta-max",
        "4",
        "--trials",
        "1",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "kappa,theta,n,trials,successes,success_rate,mean_frob_error"
    );
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("0.5,4,"));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("kappa=0.5 crossing="));
}

#[test]
fn diagnose_fields() {
    let dir = tempfile::tempdir().unwrap();
    let small = gen_file(
        dir.path(),
        "s.json",
        &[
            "--p",
            "8",
            "--s",
            "2",
            "--kappa",
            "0.5",
            "--n",
            "20",
            "--noise-variance",
            "0",
            "--seed",
            "2",
        ],
    );
    let v = json(&ok(&["diagnose", "--in", &small, "--d", "2", "--s", "2"]));
    assert_eq!(v["lambda"].as_f64(), Some(0.0));
    assert_eq!(v["epsilon_lower"].as_f64(), Some(0.0));
    for key in [
        "partition",
        "beta_min",
        "C_min",
        "rho",
        "eta_lower",
        "error_bound",
    ] {
        assert!(!v[key].is_null(), "{key} missing");
    }

    let big = gen_file(
        dir.path(),
        "b.json",
        &[
            "--p", "500", "--s", "5", "--kappa", "0.5", "--n", "10", "--seed", "2",
        ],
    );
    let out = run(&["diagnose", "--in", &big, "--d", "2", "--s", "5"]);
    assert!(out.status.success());
    let v = json(&out.stdout);
    assert!(v["C_min"].is_null() && v["rho"].is_null());
    assert!(v["lambda"].as_f64().unwrap() > 0.0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));

    let plain = dir.path().join("plain.json");
    std::fs::write(
        &plain,
        r#"{"p": 1, "r": 1, "tasks": [{"n": 1, "X": [[1.0]], "y": [1.0]}]}"#,
    )
    .unwrap();
    assert_eq!(
        run(&[
            "diagnose",
            "--in",
            plain.to_str().unwrap(),
            "--d",
            "1",
            "--s",
            "1"
        ])
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn digits_without_dataset_lists_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["digits", "--data-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for name in [
        "mfeat-fac",
        "mfeat-fou",
        "mfeat-kar",
        "mfeat-mor",
        "mfeat-pix",
        "mfeat-zer",
    ] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen_file(
        dir.path(),
        "a.json",
        &["--p", "30", "--kappa", "0.6", "--n", "25", "--seed", "11"],
    );
    let b = gen_file(
        dir.path(),
        "b.json",
        &["--p", "30", "--kappa", "0.6", "--n", "25", "--seed", "11"],
    );
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ok(&["fit", "--in", &a]), ok(&["fit", "--in", &b]));
    let sweep = [
        "sweep",
        "--p",
        "40",
        "--kappa",
        "0.5",
        "--theta-min",
        "0.5",
        "--theta-max",
        "1.5",
        "--theta-step",
        "0.5",
        "--trials",
        "8",
        "--seed",
        "5",
    ];
    assert_eq!(ok(&sweep), ok(&sweep));
}
