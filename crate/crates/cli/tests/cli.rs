use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bernet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bernet")).args(args).env_remove("BERNET_THREADS").output().expect("spawn")
}

fn stdout(args: &[&str]) -> String {
    let out = bernet(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(args: &[&str]) -> Value {
    let mut all = args.to_vec();
    all.extend(["--format", "json"]);
    serde_json::from_str(&stdout(&all)).unwrap()
}

#[test]
fn exit_codes() {
    assert_eq!(bernet(&["hist", "--bogus"]).status.code(), Some(1));
    assert_eq!(bernet(&[]).status.code(), Some(1));
    assert_eq!(bernet(&["hist", "--p", "1.5", "--reps", "2"]).status.code(), Some(2));
    assert_eq!(bernet(&["thresholds", "--alpha", "3", "--phi", "1"]).status.code(), Some(2));
    assert_eq!(bernet(&["--help"]).status.code(), Some(0));
    assert_eq!(bernet(&["rho-exact", "--config", "/nonexistent.json"]).status.code(), Some(1));
}

#[test]
fn counts_accept_scientific_notation() {
    let v = json(&["hist", "--m", "4", "--n", "4", "--reps", "2e2"]);
    assert_eq!(v["replicates"], 200);
    assert_eq!(v["manifest"]["config"]["reps"], 200);
    assert_eq!(bernet(&["hist", "--reps", "1.5"]).status.code(), Some(1));
}

#[test]
fn flags_override_config_which_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("rho.json");
    std::fs::write(&cfg, r#"{"m": 6, "p": 0.4, "seed": 9}"#).unwrap();
    let path = cfg.to_str().unwrap();
    let v = json(&["rho-exact", "--config", path]);
    assert_eq!(v["manifest"]["config"]["m"], 6);
    assert_eq!(v["manifest"]["config"]["p"], 0.4);
    assert_eq!(v["manifest"]["config"]["tol"], 1e-7);
    assert_eq!(v["manifest"]["seed"], 9);
    let v = json(&["rho-exact", "--config", path, "--m", "5", "--seed", "2"]);
    assert_eq!(v["manifest"]["config"]["m"], 5);
    assert_eq!(v["manifest"]["config"]["p"], 0.4);
    assert_eq!(v["manifest"]["seed"], 2);

    std::fs::write(&cfg, r#"{"mm": 6}"#).unwrap();
    assert_eq!(bernet(&["rho-exact", "--config", path]).status.code(), Some(1));
}

#[test]
fn manifest_for_another_command_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rho.csv");
    stdout(&["rho-exact", "--out", out.to_str().unwrap()]);
    let manifest = dir.path().join("rho.csv.manifest.json");
    assert_eq!(bernet(&["table1", "--config", manifest.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn sidecar_records_output_digest() {
    use sha2::{Digest, Sha256};
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    stdout(&["table1", "--out", out.to_str().unwrap(), "--threads", "2"]);
    let data = std::fs::read(&out).unwrap();
    let m: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("t.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "table1");
    assert_eq!(m["threads"], 2);
    assert_eq!(m["outputs"][0]["sha256"], format!("{:x}", Sha256::digest(&data)));
    assert!(chrono::DateTime::parse_from_rfc3339(m["started"].as_str().unwrap()).is_ok());
}

#[test]
fn table_has_reference_shape() {
    let csv = stdout(&["table1"]);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("m,p,rho,k_converged"));
    assert_eq!(lines.count(), 18);
    let v = json(&["table1", "--ms", "5", "--ps", "0.3,0.5"]);
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn csv_headers() {
    let cases: &[(&[&str], &str)] = &[
        (&["hist", "--m", "8", "--n", "8", "--reps", "20"], "length,count"),
        (&["theta", "--kmax", "5", "--reps", "500"], "k,estimate,stderr,replicates"),
        (&["stab-bounds"], "k,lower,upper"),
        (&["simulate-net", "--m", "5", "--n", "5"], "col,row"),
        (&["simulate-net", "--dims", "3,3", "--n", "4"], "col,row1,row2"),
        (&["longest-run", "--m", "5", "--n", "5", "--p", "0.6"], "step,col,row"),
    ];
    for (args, header) in cases {
        assert_eq!(stdout(args).lines().next(), Some(*header), "{args:?}");
    }
}

#[test]
fn repeated_runs_match_and_seeds_differ() {
    let args = ["hist", "--m", "32", "--n", "32", "--reps", "200", "--seed", "4"];
    assert_eq!(stdout(&args), stdout(&args));
    let other = ["hist", "--m", "32", "--n", "32", "--reps", "200", "--seed", "5"];
    assert_ne!(stdout(&args), stdout(&other));
}

#[test]
fn thread_env_is_honored() {
    let args = ["theta", "--kmax", "20", "--reps", "4000"];
    let a = stdout(&args);
    let out = Command::new(env!("CARGO_BIN_EXE_bernet")).args(args).env("BERNET_THREADS", "3").output().unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), a);
    let bad = Command::new(env!("CARGO_BIN_EXE_bernet")).args(args).env("BERNET_THREADS", "x").output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn phi_output_reloads_with_sandwich() {
    let v = json(&["phi", "--kmax", "30", "--reps", "20000"]);
    let fit: bernet::pseudo_tree::PhiFit = serde_json::from_value(v["fit"].clone()).unwrap();
    let series: bernet::pseudo_tree::ThetaSeries = serde_json::from_value(v["series"].clone()).unwrap();
    assert!(fit.sandwich_holds(&series, 1e-9));
    assert!(fit.phi_hat > 0.0);
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn filament_reads_thresholds_and_points() {
    let dir = tempfile::tempdir().unwrap();
    let t = stdout(&["thresholds", "--N", "256", "--phi", "1.08", "--format", "json"]);
    let t = write(dir.path(), "t.json", &t);
    let pts = write(dir.path(), "p.csv", "x,y\n0.1,0.2\n0.5,0.5\n0.9,0.3\n");
    let v = json(&["detect-filament", "--thresholds", &t, "--points", &pts]);
    assert_eq!(v["decision"], false);
    assert_eq!(v["points"], 3);
    let bad = write(dir.path(), "bad.csv", "x,y\n1.5,0.2\n");
    assert_eq!(bernet(&["detect-filament", "--thresholds", &t, "--points", &bad]).status.code(), Some(2));
}

#[test]
fn track_round_trip_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene.csv");
    stdout(&["track-sim", "--m", "10", "--n", "30", "--p0", "0.05", "--p2", "1", "--out", scene.to_str().unwrap()]);
    let a = json(&["track-test", "--input", scene.to_str().unwrap(), "--mode", "fixed", "--p-target", "0.3"]);
    assert!(a["decision"].is_boolean());
    assert_eq!(a["mode"]["mode"], "fixed_m");
}
