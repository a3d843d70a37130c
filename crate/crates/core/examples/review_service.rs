//! Starts the review service on a loopback port, loads the fixture documents
//! over HTTP, drafts a reply, rates it, and marks it sent.
//!
//! cargo run --example review_service
//!
//! Pass `--serve` to keep it running on the configured address instead.

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use admitrag::config::Settings;
use admitrag::embedding::ReferenceEmbedder;
use admitrag::generation::{GeneratorSet, ScriptedGenerator};
use admitrag::service::{serve, AppState, RunningServer};
use serde_json::{json, Value};

fn call(base: &str, method: &str, path: &str, body: Option<Value>) -> Result<(u16, Value), Box<dyn std::error::Error>> {
    let req = ureq::request(method, &format!("{base}{path}")).set("Authorization", "Bearer demo-token");
    let result = match body {
        Some(b) => req.send_json(b),
        None => req.call(),
    };
    let resp = match result {
        Ok(r) => r,
        Err(ureq::Error::Status(_, r)) => r,
        Err(e) => return Err(e.into()),
    };
    let status = resp.status();
    let text = resp.into_string()?;
    Ok((status, serde_json::from_str(&text).unwrap_or(Value::Null)))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let dir = tempfile::tempdir()?;
    let settings = Settings {
        storage_root: dir.path().to_path_buf(),
        api_token: Some("demo-token".into()),
        ..Settings::default()
    };
    let generator = ScriptedGenerator::from_file(&fixtures.join("script.json"))?;
    let state = AppState::open(settings, Arc::new(ReferenceEmbedder::default()), GeneratorSet::shared(Arc::new(generator)))?;

    if std::env::args().any(|a| a == "--serve") {
        let rt = tokio::runtime::Runtime::new()?;
        return Ok(rt.block_on(serve(state))?);
    }

    let server = RunningServer::start(state)?;
    let base = server.base_url();
    println!("listening on {base}");

    for line in std::fs::read_to_string(fixtures.join("documents.jsonl"))?.lines() {
        let (status, body) = call(&base, "POST", "/v1/kb/documents", Some(serde_json::from_str(line)?))?;
        println!("POST /v1/kb/documents -> {status} {body}");
    }
    loop {
        let (_, s) = call(&base, "GET", "/v1/kb/status", None)?;
        if s["index_watermark"] == s["kb_revision"] {
            println!("index caught up: {s}");
            break;
        }
        std::thread::sleep(Duration::from_millis(20));
    }

    let (status, draft) = call(
        &base,
        "POST",
        "/v1/inquiries",
        Some(json!({"inquiry_id": "q-deadline", "text": "When is the deadline to apply for budget places?", "channel": "email"})),
    )?;
    println!("\nPOST /v1/inquiries -> {status}\n{}", serde_json::to_string_pretty(&draft)?);
    let id = draft["draft_id"].as_str().unwrap_or_default().to_string();

    let (_, pending) = call(&base, "GET", "/v1/drafts?status=pending_review", None)?;
    println!("\npending drafts: {}", pending.as_array().map_or(0, Vec::len));
    for rater in ["reviewer-a", "reviewer-b"] {
        let (status, _) = call(&base, "POST", &format!("/v1/drafts/{id}/rating"), Some(json!({"rater_id": rater, "score": 2})))?;
        println!("rating from {rater} -> {status}");
    }
    let (status, _) = call(&base, "POST", &format!("/v1/drafts/{id}/sent"), None)?;
    println!("mark sent -> {status}");
    let (_, detail) = call(&base, "GET", &format!("/v1/drafts/{id}"), None)?;
    println!("final status: {}, ratings: {}", detail["status"], detail["ratings"]);

    server.stop()?;
    Ok(())
}
