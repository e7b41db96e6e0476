use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn dyadica(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dyadica")).current_dir(dir).args(args).output().expect("binary runs")
}

fn report(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn workspace() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("sp.json"), r#"{"family":"B","s":0.5,"tau":0.1,"p":2,"q":"inf"}"#).unwrap();
    fs::write(dir.path().join("w.json"), r#"{"kind":"diag-power","m":2,"n":1,"exponents":[-0.3,0.2]}"#).unwrap();
    fs::write(dir.path().join("t.csv"), "0:0, 1, 0, 0.5, 0\n1:1, 0.2, 0.1, 0, 0\n1:0, 0.3, 0, 0.3, 0\n").unwrap();
    dir
}

#[test]
fn params_reports_indices_and_version() {
    let dir = workspace();
    let r = report(&dyadica(dir.path(), &["params", "--space", "sp.json", "--d", "0.3"]));
    assert_eq!(r["tool"], "dyadica");
    assert_eq!(r["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(r["config"]["d"], 0.3);
    let idx = &r["result"]["indices"];
    // n = 1, p = 2: J = 1; tau = 0.1 < 1/p so J_tau = J and s~ = s
    assert_eq!(idx["j"], 1.0);
    assert_eq!(idx["j_tau"], 1.0);
    assert_eq!(idx["s_tilde"], 0.5);
    assert_eq!(idx["criticality"], "subcritical");
    assert!(r["result"]["trace_threshold"].is_null());
    assert!(r["result"]["ad_region"].as_str().unwrap().contains("D >"));
}

#[test]
fn nonpositive_p_is_refused() {
    let dir = workspace();
    fs::write(dir.path().join("bad.json"), r#"{"family":"F","s":0,"tau":0,"p":0,"q":2}"#).unwrap();
    let out = dyadica(dir.path(), &["params", "--space", "bad.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("p > 0"));

    let out = dyadica(dir.path(), &["weights", "--weight", "w.json", "--p=-1", "--window", "0:1:0..1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("p > 0"));
}

#[test]
fn weighted_norm_of_a_coefficient_file() {
    let dir = workspace();
    let r = report(&dyadica(dir.path(), &["norm", "--coeffs", "t.csv", "--weight", "w.json", "--space", "sp.json"]));
    assert_eq!(r["config"]["route"], "weighted");
    assert_eq!(r["config"]["resolved_window"], "0:1:0..1");
    let value = r["result"]["value"].as_f64().unwrap();
    assert!(value.is_finite() && value > 0.0);
    assert!(r["result"]["attaining_p"].is_string());

    let plain = report(&dyadica(dir.path(), &["norm", "--coeffs", "t.csv", "--space", "sp.json", "--route", "plain"]));
    // q = inf, tau = 0.1: sup over P of 2^{j s} |t_Q| / |P|^tau, all levels inside P = [0,1)
    let expected = [1.0f64, 2f64.sqrt() * 0.2f64.hypot(0.1), 2f64.sqrt() * 0.3]
        .into_iter()
        .fold(0.0f64, f64::max);
    let got = plain["result"]["value"].as_f64().unwrap();
    assert!(got >= expected - 1e-12, "{got} vs {expected}");
}

#[test]
fn reports_are_byte_identical_under_a_seed() {
    let dir = workspace();
    let args = ["adprobe", "--space", "sp.json", "--def", "2,2,2", "--window", "0:3:0..4", "--random", "6", "--deltas", "8", "--seed", "11"];
    let a = dyadica(dir.path(), &args);
    let b = dyadica(dir.path(), &args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);

    let c = dyadica(dir.path(), &["czkcheck", "--kernel", "hilbert", "--e", "1.5", "--f", "0.7", "--sigma", "1", "--seed", "3"]);
    let d = Command::new(env!("CARGO_BIN_EXE_dyadica"))
        .current_dir(dir.path())
        .env("DYADICA_THREADS", "1")
        .args(["czkcheck", "--kernel", "hilbert", "--e", "1.5", "--f", "0.7", "--sigma", "1", "--seed", "3"])
        .output()
        .unwrap();
    assert_eq!(c.stdout, d.stdout);
}

#[test]
fn parse_errors_name_the_line() {
    let dir = workspace();
    fs::write(dir.path().join("broken.csv"), "0:0, 1, 0\n# comment\n1:x, 0.2, 0\n").unwrap();
    let out = dyadica(dir.path(), &["norm", "--coeffs", "broken.csv", "--space", "sp.json"]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("broken.csv") && msg.contains("line 3"), "{msg}");

    fs::write(dir.path().join("sp2.json"), "{\"family\":\"B\",\n\"s\":0.5,\n\"tau\": zero}").unwrap();
    let out = dyadica(dir.path(), &["params", "--space", "sp2.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn missing_inputs_and_out_file() {
    let dir = workspace();
    let out = dyadica(dir.path(), &["norm", "--coeffs", "absent.csv", "--space", "sp.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.csv"));

    let out = dyadica(dir.path(), &["params", "--space", "sp.json", "--out", "r.json"]);
    assert!(out.status.success() && out.stdout.is_empty());
    let r: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(r["command"], "params");
}

#[test]
fn analysis_then_synthesis_reproduces_the_sample() {
    let dir = workspace();
    let h = 1.0 / 128.0;
    let count = (6.0 / h) as usize + 1;
    let mut text = format!("1, 1, {h}\n-3\n{count}\n");
    for i in 0..count {
        let x = -3.0 + i as f64 * h;
        text.push_str(&format!("{:e}, 0\n", (-3.0 * x * x).exp() * (1.0 + 0.5 * x)));
    }
    fs::write(dir.path().join("g.csv"), &text).unwrap();
    let window = "--window=-3:3:-8..3";
    let a = report(&dyadica(dir.path(), &["transform", "--sample", "g.csv", window, "--r0", "3", "--data-out", "an"]));
    let files = a["result"]["files"].as_array().unwrap();
    assert_eq!(files.len(), 2);
    let l2 = a["result"]["l2_sq"].as_f64().unwrap();
    let energy = a["result"]["sample_energy"].as_f64().unwrap();
    assert!((l2 - energy).abs() < 1e-4 * energy);

    let s = report(&dyadica(
        dir.path(),
        &["transform", "--direction", "synthesize", "--sample", "g.csv", "--coeffs", "0=an.ch0.csv", "--coeffs", "1=an.ch1.csv", window, "--r0", "3", "--data-out", "syn.csv"],
    ));
    assert_eq!(s["result"]["points"], count);
    let back = dyadica::io::read_sample_file(&dir.path().join("syn.csv")).unwrap();
    let orig = dyadica::io::read_sample_file(&dir.path().join("g.csv")).unwrap();
    assert!(back.max_diff(&orig) < 1e-4, "{}", back.max_diff(&orig));
}
