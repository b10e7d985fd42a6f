//! Kills the `itar-review` process between iterations and restarts it on
//! the same session directory.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Child, Command};
use std::time::{Duration, Instant};

use itar_core::corpus::write_corpus;
use itar_core::harness::synth::{synth_corpus, SynthConfig};
use itar_core::itar::{ItarConfig, Thresholds};
use serde_json::Value;

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn request(port: u16, method: &str, path: &str) -> Option<(u16, Value)> {
    let mut stream = TcpStream::connect(("127.0.0.1", port)).ok()?;
    let head = format!("{method} {path} HTTP/1.1\r\nHost: localhost\r\nContent-Length: 0\r\nConnection: close\r\n\r\n");
    stream.write_all(head.as_bytes()).ok()?;
    let mut raw = String::new();
    stream.read_to_string(&mut raw).ok()?;
    let (head, body) = raw.split_once("\r\n\r\n")?;
    let status = head.split_whitespace().nth(1)?.parse().ok()?;
    Some((status, serde_json::from_str(body).unwrap_or(Value::Null)))
}

fn wait_for(port: u16, mut done: impl FnMut(&Value) -> bool) -> Value {
    let start = Instant::now();
    loop {
        if let Some((200, v)) = request(port, "GET", "/session") {
            if done(&v) {
                return v;
            }
        }
        assert!(start.elapsed() < Duration::from_secs(120), "service did not reach the expected state");
        std::thread::sleep(Duration::from_millis(20));
    }
}

fn spawn(port: u16, session: &Path, extra: &[&str]) -> Child {
    Command::new(env!("CARGO_BIN_EXE_itar-review"))
        .arg("--port")
        .arg(port.to_string())
        .arg("--session-dir")
        .arg(session)
        .args(extra)
        .env("RUST_LOG", "warn")
        .spawn()
        .unwrap()
}

#[test]
fn killed_service_resumes_same_state() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus.bin");
    write_corpus(&synth_corpus(&SynthConfig::small(5)).unwrap().corpus, &corpus).unwrap();
    let mut cfg = ItarConfig::new(6, Thresholds::new(0.6, 0.3));
    cfg.em_iterations = 8;
    cfg.top_words = 5;
    let cfg_path = tmp.path().join("itar.json");
    std::fs::write(&cfg_path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let session = tmp.path().join("session");

    let port = free_port();
    let mut child = spawn(port, &session, &["--corpus", corpus.to_str().unwrap(), "--config", cfg_path.to_str().unwrap()]);
    wait_for(port, |v| v["phase"]["name"] == "idle");
    for expected in [0, 1] {
        assert_eq!(request(port, "POST", "/iterate").unwrap().0, 202);
        wait_for(port, |v| v["phase"]["name"] == "awaiting_labels" && v["iteration"] == expected);
    }
    let before = request(port, "GET", "/session").unwrap().1;
    let history_before = request(port, "GET", "/history").unwrap().1;
    assert_eq!(history_before.as_array().unwrap().len(), 1);
    child.kill().unwrap();
    child.wait().unwrap();

    let port = free_port();
    let mut child = spawn(port, &session, &[]);
    let after = wait_for(port, |_| true);
    let history_after = request(port, "GET", "/history").unwrap().1;
    child.kill().unwrap();
    child.wait().unwrap();
    assert_eq!(after, before);
    assert_eq!(history_after, history_before);
}
