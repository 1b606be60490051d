use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn rpi(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rpi"))
        .args(args)
        .current_dir(dir)
        .env("RPI_LOG", "error")
        .output()
        .expect("binary runs")
}

fn json_file(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn generate_then_simulate_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = rpi(
        &[
            "generate",
            "--generator",
            "example1:0.1",
            "--out",
            "ex1.json",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let inst = json_file(&dir.path().join("ex1.json"));
    assert_eq!(inst["schema_version"], 1);
    assert_eq!(inst["instance"]["k"], 1);

    let args = [
        "simulate",
        "--instance",
        "ex1.json",
        "--policy",
        "msa:2:weak",
        "--model",
        "ni",
        "--trials",
        "200000",
        "--seed",
        "7",
        "--out",
        "r.csv",
    ];
    assert_eq!(rpi(&args, dir.path()).status.code(), Some(0));
    let mut rdr = csv::Reader::from_path(dir.path().join("r.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let rec = rdr.records().next().unwrap().unwrap();
    let get = |name: &str| {
        rec.get(headers.iter().position(|h| h == name).unwrap())
            .unwrap()
            .to_string()
    };
    assert_eq!(get("schema_version"), "1");
    assert!(get("instance").contains("two_point"));
    let ratio: f64 = get("ratio").parse().unwrap();
    let se: f64 = get("se_ratio").parse().unwrap();
    // exact weak-tie value 0.1981 / 1.18
    assert!((ratio - 0.1981 / 1.18).abs() < 4.0 * se, "{ratio} +- {se}");
}

#[test]
fn simulate_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let base = [
        "simulate",
        "--generator",
        "random:3,6,2",
        "--policy",
        "msa_rand",
        "--trials",
        "20000",
        "--seed",
        "11",
    ];
    let mut a = base.to_vec();
    a.extend(["--out", "a.json"]);
    let mut b = base.to_vec();
    b.extend(["--out", "b.json", "--sequential"]);
    assert!(rpi(&a, dir.path()).status.success());
    assert!(rpi(&b, dir.path()).status.success());
    let ja = fs::read(dir.path().join("a.json")).unwrap();
    assert_eq!(ja, fs::read(dir.path().join("b.json")).unwrap());
    let v: Value = serde_json::from_slice(&ja).unwrap();
    assert_eq!(v["config"]["policy"], "msa_rand");
    assert_eq!(v["config"]["instance"]["k"], 2);
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.json"),
        r#"{"generator": "example1:0.1", "policy": "msa:2:weak", "model": "ni"}"#,
    )
    .unwrap();
    let out = rpi(&["exact", "--config", "run.json"], dir.path());
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["result"]["value"].as_f64().unwrap() - 0.1981).abs() < 1e-9);

    // flags override the file
    let out = rpi(
        &["exact", "--config", "run.json", "--policy", "msa:2"],
        dir.path(),
    );
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["result"]["value"].as_f64().unwrap() - 0.266).abs() < 1e-9);
}

#[test]
fn exact_with_permutation_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("p.txt"), "3 2 1\n").unwrap();
    let out = rpi(
        &[
            "exact",
            "--generator",
            "example1:0.1",
            "--policy",
            "stop_at:1",
            "--model",
            "fi",
            "--order",
            "perm:p.txt",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(
        v["config"]["order"]["fixed_permutation"],
        serde_json::json!([2, 1, 0])
    );
}

#[test]
fn optimal_fi_hard_instance() {
    let dir = tempfile::tempdir().unwrap();
    let out = rpi(
        &[
            "exact",
            "--generator",
            "hard_fi:1,0.001",
            "--model",
            "fi",
            "--optimal",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["result"]["ratio"].as_f64().unwrap() - 1.0 / 3.0).abs() < 0.01);
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        rpi(&["simulate", "--bogus"], dir.path()).status.code(),
        Some(1)
    );
    assert_eq!(
        rpi(&["simulate", "--generator", "example1:0.1"], dir.path())
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        rpi(
            &[
                "simulate",
                "--generator",
                "example1:0.1",
                "--policy",
                "msa_bar:1",
                "--model",
                "ni"
            ],
            dir.path()
        )
        .status
        .code(),
        Some(1)
    );
    assert_eq!(
        rpi(
            &["exact", "--instance", "missing.json", "--policy", "msa:1"],
            dir.path()
        )
        .status
        .code(),
        Some(1)
    );
    assert_eq!(rpi(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn verify_lemmas_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = rpi(
        &[
            "verify-lemmas",
            "--max-n",
            "5",
            "--max-k",
            "0",
            "--pmf-sweep",
            "--out",
            "v.json",
        ],
        dir.path(),
    );
    assert_eq!(ok.status.code(), Some(0));
    let v = json_file(&dir.path().join("v.json"));
    assert_eq!(v["passed"], true);
    assert_eq!(v["pmf_sweep"]["mismatches"], 0);

    // the tau = w_{2k+2} bound fails from n = 3, k = 1 on
    let bad = rpi(
        &[
            "verify-lemmas",
            "--max-n",
            "3",
            "--max-k",
            "1",
            "--out",
            "w.json",
        ],
        dir.path(),
    );
    assert_eq!(bad.status.code(), Some(2));
    let w = json_file(&dir.path().join("w.json"));
    let violated: Vec<&str> = w["report"]["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["violations"].as_u64().unwrap() > 0)
        .map(|c| c["check"].as_str().unwrap())
        .collect();
    assert_eq!(
        violated,
        ["msa_k1_tau_2k2_expectation", "msa_k1_tau_conditional"]
    );

    let single = rpi(
        &["verify-lemmas", "--partner", "5,6,4,3,1,2", "--k", "1"],
        dir.path(),
    );
    assert_eq!(single.status.code(), Some(2));
    let single = rpi(
        &["verify-lemmas", "--partner", "2,1,4,3", "--k", "1"],
        dir.path(),
    );
    assert_eq!(single.status.code(), Some(0));
}

#[test]
fn iid_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let out = rpi(&["iid-lower-bound", "--alpha", "2"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["optimum"]["alpha"].as_f64().unwrap() - 1.64718).abs() < 1e-4);
    assert!((v["at_alpha"]["bound"].as_f64().unwrap() - 0.43233).abs() < 1e-5);

    let out = rpi(
        &[
            "iid-upper-bound",
            "--a",
            "0.5463",
            "--b",
            "0.4537",
            "--beta",
            "109.131",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["params"]["p_value"].as_f64().unwrap() - 0.5463).abs() < 5e-4);

    fs::write(
        dir.path().join("u.json"),
        r#"{"type": "quantile_grid", "us": [0.0, 1.0], "values": [1.0, 0.0]}"#,
    )
    .unwrap();
    let out = rpi(
        &[
            "iid-check",
            "--n",
            "3",
            "--q",
            "0.5",
            "--dist",
            "u.json",
            "--trials",
            "50000",
        ],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["result"]["alg_q"].as_f64().unwrap() - 0.3359375).abs() < 1e-9);
    assert!((v["result"]["ex2"].as_f64().unwrap() - 0.5).abs() < 1e-12);
}
