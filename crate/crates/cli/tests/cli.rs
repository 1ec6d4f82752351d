use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_autotune")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn write_config(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

/// Small, fast tuning setup on three operating points.
fn quick_tune(dir: &Path, structure: &Path) -> PathBuf {
    write_config(
        dir,
        "tune.json",
        &json!({
            "plant": configs().join("demo_plant.json"),
            "grid": {"min_hz": 0.5, "max_hz": 500.0, "points": 200},
            "points": {"count": 3},
            "structure": structure,
            "tune": {"seed": 4, "pso": {"particles": 6, "iterations": 3}, "bfgs": {"max_iterations": 3}}
        }),
    )
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn synth_writes_deterministic_frf_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("demo_synth.json");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["synth", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (fa, fb) = (std::fs::read(a.join("frf.json")).unwrap(), std::fs::read(b.join("frf.json")).unwrap());
    assert_eq!(fa, fb);
    let set = autotune_core::frf::load_frf_set(a.join("frf.json")).unwrap();
    assert_eq!(set.len(), 11);
    assert_eq!(set.grid.len(), 400);
}

#[test]
fn missing_config_is_an_input_error() {
    let o = run(&["tune", "--config", "/nonexistent/run.json"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("file not found"));
}

#[test]
fn channel_mismatch_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let st = write_config(
        dir.path(),
        "one_channel.json",
        &json!({"channels": 1, "filters": [{"kind": "pi", "params": {"kp": {"value": 1e6, "bounds": [1e4, 1e8]}}}]}),
    );
    let cfg = quick_tune(dir.path(), &st);
    let o = run(&["tune", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn tune_then_analyze_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_tune(dir.path(), &configs().join("demo_lti_structure.json"));
    let out = dir.path().join("tuned");
    let o = run(&["tune", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["report.json", "controller.json", "sensitivity.csv", "nyquist.csv", "bode_loop.csv", "weights.csv"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["result"]["stable"], json!(true));

    let mut analyze = read_json(&cfg);
    analyze["controller"] = json!(out.join("controller.json"));
    let acfg = write_config(dir.path(), "analyze.json", &analyze);
    let aout = dir.path().join("analysis");
    let o = run(&["analyze", "--config", acfg.to_str().unwrap(), "--out", aout.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let analysis = read_json(&aout.join("analysis.json"));
    assert_eq!(analysis["evaluation"]["norms"], report["result"]["final_evaluation"]["norms"]);

    // the CSV has one row per local, frequency and channel
    let rows = csv::Reader::from_path(aout.join("sensitivity.csv")).unwrap().records().count();
    assert_eq!(rows, 3 * 200 * 2);
}

#[test]
fn destabilizing_gain_is_reported_unstable() {
    let dir = tempfile::tempdir().unwrap();
    let mut st = read_json(&configs().join("demo_lti_structure.json"));
    st["filters"][0]["params"]["kp"] = json!({"value": 3.0e8, "bounds": [1e6, 1e9]});
    let st = write_config(dir.path(), "hot.json", &st);
    let mut cfg = read_json(&quick_tune(dir.path(), &st));
    cfg["controller"] = json!(st);
    let cfg = write_config(dir.path(), "analyze.json", &cfg);
    let o = run(&["analyze", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("a").to_str().unwrap()]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read_json(&dir.path().join("a/analysis.json"))["stable"], json!(false));
}

#[test]
fn infeasible_search_still_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let st = write_config(
        dir.path(),
        "weak.json",
        &json!({"channels": 2, "filters": [{"kind": "pi", "params": {"kp": {"value": 5.0, "bounds": [1.0, 10.0]}}}]}),
    );
    let cfg = quick_tune(dir.path(), &st);
    let out = dir.path().join("out");
    let o = run(&["tune", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["result"]["failure"], json!("no stabilizing parameters found"));
}

#[test]
fn discrete_time_mode_records_sampling() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_tune(dir.path(), &configs().join("demo_lti_structure.json"));
    let out = dir.path().join("dt");
    let o = run(&["tune", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--mode", "dt", "--ts", "1e-4"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ctrl = read_json(&out.join("controller.json"));
    assert_eq!(ctrl["mode"], json!("dt"));
    assert_eq!(ctrl["discrete"]["sample_time_s"], json!(1e-4));

    // dt without a sampling time
    let o = run(&["tune", "--config", cfg.to_str().unwrap(), "--mode", "dt"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn bad_thread_cap_is_rejected() {
    let o = Command::new(env!("CARGO_BIN_EXE_autotune"))
        .args(["synth", "--config", configs().join("demo_synth.json").to_str().unwrap(), "--out", "/tmp/unused"])
        .env("AUTOTUNE_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}
