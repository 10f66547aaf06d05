mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use common::{posterior_dir, salmon, stderr};

fn dir() -> String {
    posterior_dir().to_str().unwrap().to_string()
}

#[test]
fn diagnose_passes_after_small_demo_fit() {
    let o = salmon(&["diagnose", "--posterior-dir", &dir()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("max R-hat"));
}

#[test]
fn diagnose_exits_nonzero_when_gate_fails() {
    let o = salmon(&["diagnose", "--posterior-dir", &dir(), "--rhat-threshold", "1.0000001"]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error[E_CONVERGENCE]"), "{}", stderr(&o));
}

#[test]
fn empty_policy_file_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("empty.json");
    std::fs::write(&p, "").unwrap();
    let o = salmon(&["project", "--posterior-dir", &dir(), "--policy", p.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error[E_VALIDATION]"), "{}", stderr(&o));
}

#[test]
fn project_is_deterministic_and_compare_writes_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("half.json");
    std::fs::write(&p, r#"{"name": "half", "multipliers": {"offshore": 0.5, "coastal": 0.5}}"#).unwrap();
    let run = || salmon(&["project", "--posterior-dir", &dir(), "--policy", p.to_str().unwrap()]);
    let (a, b) = (run(), run());
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["schema"], "v1");
    assert_eq!(v["n_draws"], 1000);

    let csv = tmp.path().join("table.csv");
    let o = salmon(&["compare", "--posterior-dir", &dir(), "--ids", "status_quo,moratorium", "--csv", csv.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("policy,stock,p_reach_50"));
    assert_eq!(text.lines().count(), 1 + 2 * 2);
}

#[test]
fn posterior_dir_can_come_from_the_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_salmon"))
        .args(["diagnose"])
        .env("SALMON_POSTERIOR_DIR", dir())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn missing_posterior_dir_reports_io_error() {
    let o = salmon(&["diagnose", "--posterior-dir", "/nonexistent/posterior"]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error["), "{}", stderr(&o));
}

fn get(addr: &str, path: &str) -> String {
    let mut s = TcpStream::connect(addr).unwrap();
    write!(s, "GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut text = String::new();
    s.read_to_string(&mut text).unwrap();
    text
}

#[test]
fn serve_answers_and_stops_on_sigterm() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_salmon"))
        .args(["serve", "--posterior-dir", &dir(), "--port", "0"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stderr.take().unwrap()).lines();
    let line = lines.next().unwrap().unwrap();
    let addr = line.trim_start_matches("listening on ").trim().to_string();
    let resp = get(&addr, "/health");
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(resp.contains("\"status\": \"ok\""));

    let killed = Command::new("kill").args(["-TERM", &child.id().to_string()]).status().unwrap();
    assert!(killed.success());
    let start = Instant::now();
    loop {
        if let Some(status) = child.try_wait().unwrap() {
            assert!(status.success(), "{status:?}");
            break;
        }
        assert!(start.elapsed() < Duration::from_secs(10), "server did not stop");
        std::thread::sleep(Duration::from_millis(50));
    }
}
