//! Normalizes, redacts, and stores the fixture documents in a knowledge base,
//! then reopens it and prints what survived.
//!
//! cargo run --example ingest

use std::path::Path;

use admitrag::corpus::{load_rules, Document, KnowledgeBase};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let rules = load_rules(&fixtures.join("redaction.toml"))?;
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("kb.jsonl");

    let mut kb = KnowledgeBase::open(&path, "admissions")?;
    let events = kb.subscribe();
    for line in std::fs::read_to_string(fixtures.join("documents.jsonl"))?.lines() {
        let doc: Document = serde_json::from_str(line)?;
        let id = doc.doc_id.clone();
        let rev = kb.upsert(doc, &rules)?;
        println!("{id}: revision {rev}, kb revision {}", kb.kb_revision());
    }
    kb.save(&path)?;
    println!("{} change events", events.try_iter().count());

    let reopened = KnowledgeBase::load(&path)?;
    println!("reloaded {} documents, kb revision {}", reopened.len(), reopened.kb_revision());
    let history = reopened.get("qa-history-0001").expect("fixture doc");
    println!("\n{}:\n{}", history.doc_id, history.text);
    Ok(())
}
