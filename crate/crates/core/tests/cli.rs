use std::process::{Command, Output};

use serde_json::Value;

fn qbh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qbh")).args(args).output().expect("spawn qbh")
}

fn qbh_env(args: &[&str], threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qbh"))
        .args(args)
        .env("QBH_THREADS", threads)
        .output()
        .expect("spawn qbh")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn exit_codes() {
    assert_eq!(qbh(&["verify", "--K", "3"]).status.code(), Some(0));
    assert_eq!(qbh(&["verify", "--K", "1"]).status.code(), Some(1));
    assert_eq!(qbh(&["learn", "--epsilon", "0"]).status.code(), Some(1));
    assert_eq!(qbh(&["bh", "--K", "3", "--n", "1", "--d", "5"]).status.code(), Some(1));
    assert_eq!(qbh(&["bh", "--basis", "pauli"]).status.code(), Some(1));
    // Labels without a closed-form eigenbasis are rejected as input.
    assert_eq!(qbh(&["eigen", "--K", "4", "--label", "(2,2)"]).status.code(), Some(1));
    assert_eq!(qbh(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(qbh(&["--help"]).status.code(), Some(0));
    assert_eq!(qbh(&["--version"]).status.code(), Some(0));
    assert_eq!(qbh_env(&["verify", "--K", "2"], "zero").status.code(), Some(1));
}

#[test]
fn verify_reports_gcd_convention_at_k6() {
    let out = qbh(&["verify", "--K", "6"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["passed"], true);
    let names: Vec<&str> = v["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"gcd_convention"));
    assert!(names.contains(&"eigenpair_residuals"));
}

#[test]
fn bh_gm_campaign() {
    let out = qbh(&["bh", "--basis", "gm", "--K", "2", "--n", "2", "--d", "2", "--trials", "100", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!(v["max_ratio"].as_f64().unwrap() <= v["bound_used"].as_f64().unwrap());
    assert!(v["flagged"].as_array().unwrap().is_empty());
    assert_eq!(v["records"].as_array().unwrap().len(), 100);
}

#[test]
fn bh_hw_prime_correspondence() {
    let out = qbh(&["bh", "--basis", "hw", "--K", "3", "--n", "1", "--d", "2", "--trials", "20"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let rows = v["correspondence"].as_array().unwrap();
    assert!(!rows.is_empty());
    for r in rows {
        assert!(r["abs_error"].as_f64().unwrap() <= 1e-10);
        let m = r["monomial"].as_str().unwrap();
        assert!(m == "1" || m.starts_with("z["), "{m}");
    }
}

#[test]
fn bh_hw_nonprime_degree_cap() {
    let out = qbh(&["bh", "--basis", "hw", "--K", "4", "--n", "1", "--d", "2", "--trials", "5", "--checks", "5"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let reds = v["reductions"].as_array().unwrap();
    assert_eq!(reds.len(), 5);
    for r in reds {
        let op = r["operator_degree"].as_u64().unwrap();
        assert!(r["classical_degree"].as_u64().unwrap() <= 3 * op);
        assert_eq!(r["passed"], true);
    }
}

#[test]
fn learn_modes() {
    let out = qbh(&["learn", "--K", "2", "--n", "2", "--d", "1", "--trials", "3", "--max-samples", "20000"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["rows"].as_array().unwrap().len(), 3);

    let out = qbh(&[
        "learn", "--mode", "arbitrary", "--K", "2", "--n", "3", "--epsilon", "0.5", "--trials", "2", "--max-samples", "20000",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    for r in v["rows"].as_array().unwrap() {
        assert!(r["final_haar"].as_f64().unwrap() <= 0.5);
    }
}

#[test]
fn learn_from_target_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("target.json");
    let doc = r#"{"basis":"gm","K":2,"n":2,"entries":[{"labels":["Sym(1,2)","I"],"re":0.5,"im":0.0}]}"#;
    std::fs::write(&path, doc).unwrap();
    let out = qbh(&["learn", "--target", path.to_str().unwrap(), "--trials", "2", "--max-samples", "20000"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn eigen_table() {
    let out = qbh(&["eigen", "--K", "4", "--label", "(1,1)", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 5);
}

/// Every numeric CSV cell equals the matching JSON record field bit for bit.
#[test]
fn csv_matches_json() {
    let args = ["bh", "--basis", "gm", "--K", "3", "--n", "1", "--d", "1", "--trials", "10", "--seed", "9"];
    let j = json(&qbh(&args));
    let mut csv_args = args.to_vec();
    csv_args.extend(["--format", "csv"]);
    let out = qbh(&csv_args);
    let mut rdr = csv::Reader::from_reader(out.stdout.as_slice());
    let headers = rdr.headers().unwrap().clone();
    let records = j["records"].as_array().unwrap();
    let mut n = 0;
    for (row, rec) in rdr.records().zip(records) {
        let row = row.unwrap();
        for (h, cell) in headers.iter().zip(row.iter()) {
            match &rec[h] {
                Value::Number(x) if x.is_f64() => {
                    assert_eq!(cell.parse::<f64>().unwrap().to_bits(), x.as_f64().unwrap().to_bits(), "{h}");
                }
                Value::Number(x) => assert_eq!(cell, x.to_string(), "{h}"),
                Value::Bool(b) => assert_eq!(cell, b.to_string()),
                other => panic!("unexpected field {h}: {other}"),
            }
        }
        n += 1;
    }
    assert_eq!(n, 10);
}

#[test]
fn repeated_runs_are_identical() {
    let runs: [&[&str]; 3] = [
        &["bh", "--basis", "hw", "--K", "3", "--n", "1", "--d", "2", "--trials", "30", "--seed", "5"],
        &["learn", "--K", "3", "--n", "1", "--d", "1", "--trials", "2", "--max-samples", "50000", "--seed", "3"],
        &["noise", "--K", "2", "--n", "2", "--d", "1", "--trials", "5", "--samples", "500", "--moment-samples", "2000"],
    ];
    for args in runs {
        let a = qbh_env(args, "1");
        let b = qbh_env(args, "4");
        let c = qbh(args);
        assert_eq!(a.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&a.stderr));
        assert_eq!(a.stdout, b.stdout, "{args:?}");
        assert_eq!(a.stdout, c.stdout, "{args:?}");
    }
}

#[test]
fn out_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let args = ["verify", "--K", "2"];
    let direct = qbh(&args);
    let mut with_out = args.to_vec();
    let p = path.to_str().unwrap();
    with_out.extend(["--out", p]);
    let o = qbh(&with_out);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    assert_eq!(std::fs::read(&path).unwrap(), direct.stdout);
}
