#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use honvis::bundle::NetworkBundle;
use honvis_core::fixtures;
use honvis_core::ingest::{build_trajectories, parse_ports, parse_voyages};
use honvis_core::{build_fon, build_hon, BuildParams};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub fn fig2_params() -> BuildParams {
    BuildParams { min_support: 3, ..BuildParams::default() }
}

/// The Fig-2 fixture taken through the CSV path.
pub fn fig2_bundle() -> NetworkBundle {
    let ports = parse_ports(fixtures::FIG2_PORTS_CSV.as_bytes()).unwrap();
    let voyages = parse_voyages(fixtures::fig2_voyages_csv().as_bytes(), &ports).unwrap();
    let set = build_trajectories(&voyages, None);
    NetworkBundle::new(ports, build_fon(&set), build_hon(&set, fig2_params()))
}

pub fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/schemas")
}

/// Schema violations as messages; empty when valid.
pub fn schema_errors(name: &str, value: &Value) -> Vec<String> {
    let path = schema_dir().join(format!("{name}.json"));
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    validator.iter_errors(value).map(|e| format!("{name}: {e} at {}", e.instance_path)).collect()
}

pub fn assert_schema(name: &str, value: &Value) {
    let errors = schema_errors(name, value);
    assert!(errors.is_empty(), "{errors:#?}\n{value:#}");
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_honvis")
}

pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn honvis(args: &[&str]) -> Output {
    let out = Command::new(bin()).args(args).output().unwrap();
    Output {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

/// Writes the Fig-2 port and voyage CSVs into `dir`.
pub fn write_fig2_inputs(dir: &Path) -> (PathBuf, PathBuf) {
    let ports = dir.join("ports.csv");
    let voyages = dir.join("voyages.csv");
    std::fs::write(&ports, fixtures::FIG2_PORTS_CSV).unwrap();
    std::fs::write(&voyages, fixtures::fig2_voyages_csv()).unwrap();
    (ports, voyages)
}

/// A running `honvis serve`, killed on drop.
pub struct Server {
    child: Child,
    pub addr: String,
}

impl Server {
    pub fn start(args: &[&str]) -> Server {
        let mut child = Command::new(bin())
            .arg("serve")
            .args(args)
            .args(["--listen", "127.0.0.1:0"])
            .stderr(Stdio::piped())
            .stdout(Stdio::null())
            .spawn()
            .unwrap();
        let mut lines = BufReader::new(child.stderr.take().unwrap()).lines();
        let addr = loop {
            let line = lines.next().expect("server exited before listening").unwrap();
            let v: Value = serde_json::from_str(&line).unwrap();
            if v["event"] == "listening" {
                break v["addr"].as_str().unwrap().to_string();
            }
        };
        Server { child, addr }
    }

    /// Minimal HTTP/1.1 exchange with `Connection: close`.
    pub fn request(&self, method: &str, path: &str, body: Option<&Value>) -> (u16, Value) {
        let mut stream = TcpStream::connect(&self.addr).unwrap();
        let payload = body.map(|b| b.to_string()).unwrap_or_default();
        let mut head = format!("{method} {path} HTTP/1.1\r\nHost: {}\r\nConnection: close\r\n", self.addr);
        if body.is_some() {
            head.push_str("Content-Type: application/json\r\n");
        }
        head.push_str(&format!("Content-Length: {}\r\n\r\n", payload.len()));
        stream.write_all(head.as_bytes()).unwrap();
        stream.write_all(payload.as_bytes()).unwrap();
        let mut raw = Vec::new();
        stream.read_to_end(&mut raw).unwrap();
        let text = String::from_utf8(raw).unwrap();
        let (headers, body) = text.split_once("\r\n\r\n").unwrap();
        let status: u16 = headers.split_whitespace().nth(1).unwrap().parse().unwrap();
        let body = if headers.to_ascii_lowercase().contains("transfer-encoding: chunked") {
            dechunk(body)
        } else {
            body.to_string()
        };
        let value = if body.is_empty() { Value::Null } else { serde_json::from_str(&body).unwrap() };
        (status, value)
    }
}

fn dechunk(mut s: &str) -> String {
    let mut out = String::new();
    loop {
        let (size, rest) = s.split_once("\r\n").unwrap();
        let n = usize::from_str_radix(size.trim(), 16).unwrap();
        if n == 0 {
            return out;
        }
        out.push_str(&rest[..n]);
        s = &rest[n + 2..];
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
