//! Builds a vector index over the fixture knowledge base, saves and reloads
//! it, and runs a few queries.
//!
//! cargo run --example retrieval -- "when do applications close?"

use std::path::Path;

use admitrag::chunking::ChunkingParams;
use admitrag::corpus::{Document, KnowledgeBase};
use admitrag::embedding::ReferenceEmbedder;
use admitrag::index::{SearchOptions, VectorIndex};
use admitrag::retrieval::{rebuild_index, RetrievalSnapshot};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut kb = KnowledgeBase::new("admissions");
    for line in std::fs::read_to_string(fixtures.join("documents.jsonl"))?.lines() {
        kb.upsert(serde_json::from_str::<Document>(line)?, &[])?;
    }

    let embedder = ReferenceEmbedder::default();
    let params = ChunkingParams::default();
    let snapshot = rebuild_index(&kb, &params, &embedder)?;
    println!("indexed {} chunks at watermark {}", snapshot.index().len(), snapshot.watermark());

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("index.bin");
    snapshot.index().save(&path)?;
    let reloaded = RetrievalSnapshot::from_parts(VectorIndex::load(&path)?, &kb, params)?;

    let mut queries: Vec<String> = std::env::args().skip(1).collect();
    if queries.is_empty() {
        queries = vec![
            "When do applications close?".into(),
            "How much does tuition cost per year?".into(),
            "Is there a dormitory for first-year students?".into(),
        ];
    }
    for q in &queries {
        println!("\n{q}");
        for sc in reloaded.retrieve(&embedder, q, SearchOptions::top(3))? {
            let excerpt: String = sc.chunk.text.chars().take(80).collect();
            println!("  {} {:.4} {:<22} {}", sc.hit.rank, sc.hit.score, sc.hit.chunk_id.to_string(), excerpt.replace('\n', " "));
        }
    }
    Ok(())
}
