use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_adapter-mpc");
const DEMO_TABLE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data/demo_utility.csv");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(args: &[&str]) -> serde_json::Value {
    let o = run(&[args, &["--json"]].concat());
    assert!(o.status.success(), "{args:?}: {}", stderr(&o));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn estimate_prints_the_published_latency() {
    let o = run(&["estimate", "--h", "1", "--r", "300", "--s", "1"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("latency  2.24 s"), "{text}");
    assert!(text.contains("[published]"), "{text}");
    let j = json(&["estimate", "--h", "1", "--r", "300", "--s", "1"]);
    assert!((j["latency"]["total_s"].as_f64().unwrap() - 2.24).abs() <= 0.01);
    assert_eq!(j["rounds"], 29);
}

#[test]
fn report_prints_the_round_speedup() {
    let o = run(&["report", "--arch", "1,300,1"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("2.66×"), "{text}");
    assert!(text.contains("SFT baseline") && text.contains("[published]"), "{text}");
}

#[test]
fn lan_estimates_need_fitted_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("lan.json");
    std::fs::write(&cfg, r#"{"env": {"label": "LAN", "bandwidth_mbps": 1000, "latency_ms": 0.5}}"#).unwrap();
    let o = run(&["--config", path(&cfg), "estimate", "--h", "1", "--r", "8", "--s", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--coefficients"), "{}", stderr(&o));
}

#[test]
fn missing_weights_exit_with_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no-such-weights");
    let o = run(&["infer", "--weights", path(&missing), "--features", "x.bin"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains(path(&missing)), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"adapter": {"h": 2, "r": 8}, "extra": 1}"#).unwrap();
    let o = run(&["--config", path(&cfg), "verify", "--inputs", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("extra"), "{}", stderr(&o));
    assert_eq!(run(&["estimate", "--h", "1"]).status.code(), Some(2));
    assert_eq!(run(&["--config", "/no/such/config.json", "report"]).status.code(), Some(3));
}

#[test]
fn init_then_infer_in_process_and_over_loopback() {
    let dir = tempfile::tempdir().unwrap();
    let d = path(dir.path());
    json(&["--seed", "4", "init", "--out", d, "--dtype", "f32"]);
    let w = dir.path().join("weights");
    let x = dir.path().join("features.bin");
    let report = dir.path().join("out/report.json");
    let a = json(&["--seed", "4", "infer", "--weights", path(&w), "--features", path(&x), "--out", path(&report)]);
    let b = json(&["--seed", "4", "infer", "--weights", path(&w), "--features", path(&x), "--tcp"]);
    assert_eq!(a["rounds"], 29);
    assert_eq!(a["logits"].as_array().unwrap().len(), 10);
    for k in ["logits", "argmax", "rounds", "bytes", "simulated_comm_time"] {
        assert_eq!(a[k], b[k], "{k}");
    }
    let saved: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(saved["logits"], a["logits"]);
}

#[test]
fn verify_passes_and_an_unreachable_tolerance_fails() {
    let ok = json(&["verify", "--inputs", "10"]);
    assert_eq!(ok["passed"], true);
    assert!(ok["max_abs_error"].as_f64().unwrap() <= 1e-2);
    let o = run(&["verify", "--inputs", "5", "--tolerance", "1e-9"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("worst input seed"), "{}", stderr(&o));
}

#[test]
fn identity_adapters_reduce_to_the_classifier() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("id.json");
    std::fs::write(&cfg, r#"{"adapter": {"scaler": 0.0, "s": 1}}"#).unwrap();
    let j = json(&["--config", path(&cfg), "verify", "--inputs", "10"]);
    assert_eq!(j["passed"], true);
}

#[test]
fn search_on_the_demo_table_returns_the_brute_force_winner() {
    let j = json(&["search", "--table", DEMO_TABLE, "--utility", "0.85", "--latency", "3", "--compare"]);
    assert_eq!(j["matches_brute_force"], true);
    assert_eq!(j["outcome"]["met_target"], true);
    let best = &j["outcome"]["best"];
    assert_eq!((best["h"].as_u64(), best["r"].as_u64(), best["s"].as_u64()), (Some(4), Some(120), Some(1)));
    assert_eq!(j["space"]["heads"], serde_json::json!([1, 2, 4]));
}

#[test]
fn search_with_a_command_evaluator() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("eval.sh");
    // utility = r / 20, capped at 1
    std::fs::write(&script, "awk -v r=\"$4\" 'BEGIN { u = r / 20; if (u > 1) u = 1; print u }'\n").unwrap();
    let j = json(&[
        "search", "--command", "sh", "--command-arg", path(&script), "--heads", "1,2", "--ranks", "4,8,16",
        "--max-s", "2", "--utility", "0.4", "--latency", "5", "--compare",
    ]);
    assert_eq!(j["matches_brute_force"], true, "{j}");
    assert_eq!(j["outcome"]["best"]["r"], 8);
}

#[test]
fn profile_then_fit_then_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("p.csv");
    let coeffs = dir.path().join("c.json");
    let samples = json(&["profile", "--heads", "1,2", "--ranks", "4,8", "--adapters", "1,2", "--out", path(&csv)]);
    assert_eq!(samples.as_array().unwrap().len(), 8);
    let fit = json(&["fit", "--samples", path(&csv), "--out", path(&coeffs)]);
    assert!(fit["r2_comm"].as_f64().unwrap() > 0.98);
    let e = json(&["estimate", "--h", "2", "--r", "8", "--s", "2", "--coefficients", path(&coeffs)]);
    assert_eq!(e["rounds"], 55);
    assert!(e["latency_source"].as_str().unwrap().contains("fitted"));
}
