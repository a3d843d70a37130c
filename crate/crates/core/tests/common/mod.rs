#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use admitrag::config::Settings;
use admitrag::corpus::Document;
use admitrag::embedding::ReferenceEmbedder;
use admitrag::generation::{GeneratorSet, ScriptedGenerator};
use admitrag::service::{AppState, RunningServer};
use serde_json::Value;

pub const TOKEN: &str = "test-token";

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn fixture_documents() -> Vec<Value> {
    std::fs::read_to_string(fixture("documents.jsonl"))
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

pub fn fixture_kb_docs() -> Vec<Document> {
    fixture_documents()
        .into_iter()
        .map(|v| {
            let mut d = Document::new(
                v["doc_id"].as_str().unwrap(),
                v["source_kind"].as_str().unwrap().parse().unwrap(),
                v["title"].as_str().unwrap(),
                v["text"].as_str().unwrap(),
            );
            if let Some(m) = v["metadata"].as_object() {
                for (k, val) in m {
                    d = d.with_meta(k.clone(), val.as_str().unwrap());
                }
            }
            d
        })
        .collect()
}

pub fn service_settings(root: &Path) -> Settings {
    Settings {
        storage_root: root.to_path_buf(),
        api_token: Some(TOKEN.into()),
        ..Settings::default()
    }
}

pub fn start_service(root: &Path) -> RunningServer {
    let generator = ScriptedGenerator::from_file(&fixture("script.json")).unwrap();
    start_service_with(root, GeneratorSet::shared(Arc::new(generator)))
}

pub fn start_service_with(root: &Path, generators: GeneratorSet) -> RunningServer {
    let state = AppState::open(service_settings(root), Arc::new(ReferenceEmbedder::default()), generators).unwrap();
    RunningServer::start(state).unwrap()
}

/// Starts a service and loads the fixture documents.
pub fn seeded_service(root: &Path) -> RunningServer {
    let server = start_service(root);
    for doc in fixture_documents() {
        assert_eq!(api(&server, "POST", "/v1/kb/documents", Some(doc)).status, 202);
    }
    wait_for_index(&server, Duration::from_secs(10)).expect("index caught up");
    server
}

pub struct Reply {
    pub status: u16,
    pub body: Value,
    pub next_cursor: Option<String>,
}

/// Sends a request and returns the status whatever it is.
pub fn call(method: &str, url: &str, token: Option<&str>, body: Option<&str>) -> Reply {
    let mut req = ureq::request(method, url).timeout(Duration::from_secs(30));
    if let Some(t) = token {
        req = req.set("Authorization", &format!("Bearer {t}"));
    }
    let result = match body {
        Some(b) => req.set("Content-Type", "application/json").send_string(b),
        None => req.call(),
    };
    let resp = match result {
        Ok(r) => r,
        Err(ureq::Error::Status(_, r)) => r,
        Err(e) => panic!("{method} {url}: {e}"),
    };
    let status = resp.status();
    let next_cursor = resp.header("x-next-cursor").map(str::to_string);
    let text = resp.into_string().unwrap_or_default();
    let body = serde_json::from_str(&text).unwrap_or(Value::Null);
    Reply { status, body, next_cursor }
}

pub fn api(server: &RunningServer, method: &str, path: &str, body: Option<Value>) -> Reply {
    let body = body.map(|b| b.to_string());
    call(method, &format!("{}{}", server.base_url(), path), Some(TOKEN), body.as_deref())
}

/// Polls `/v1/kb/status` until the index watermark reaches the KB revision.
pub fn wait_for_index(server: &RunningServer, timeout: Duration) -> Option<Duration> {
    let start = Instant::now();
    while start.elapsed() < timeout {
        let s = api(server, "GET", "/v1/kb/status", None).body;
        if s["index_watermark"] == s["kb_revision"] {
            return Some(start.elapsed());
        }
        std::thread::sleep(Duration::from_millis(20));
    }
    None
}
