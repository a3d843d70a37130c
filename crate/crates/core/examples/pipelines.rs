//! Runs one inquiry through all four response configurations and prints the
//! prompt, draft, and citations for each.
//!
//! cargo run --example pipelines

use std::path::Path;

use admitrag::chunking::ChunkingParams;
use admitrag::corpus::{Document, KnowledgeBase};
use admitrag::embedding::ReferenceEmbedder;
use admitrag::generation::{
    assemble_prompt, run_pipeline, Inquiry, ModelSlots, PipelineConfig, ScriptedGenerator, RAG_TEMPLATE_ID,
};
use admitrag::index::SearchOptions;
use admitrag::retrieval::rebuild_index;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut kb = KnowledgeBase::new("admissions");
    for line in std::fs::read_to_string(fixtures.join("documents.jsonl"))?.lines() {
        kb.upsert(serde_json::from_str::<Document>(line)?, &[])?;
    }
    let embedder = ReferenceEmbedder::default();
    let snapshot = rebuild_index(&kb, &ChunkingParams::default(), &embedder)?;
    let generator = ScriptedGenerator::from_file(&fixtures.join("script.json"))?;

    let inquiry = Inquiry::new("q-dorm", "Do first-year students get a place in the dormitory, and when can they move in?");
    let hits = snapshot.retrieve(&embedder, &inquiry.text, SearchOptions::top(3))?;
    println!("{}\n", assemble_prompt(&inquiry.text, &hits, RAG_TEMPLATE_ID)?);

    for config in PipelineConfig::all(&ModelSlots::default()) {
        let draft = run_pipeline(&config, &inquiry, &snapshot, &embedder, &generator)?;
        println!("[{}] model={} retrieval={}", config.name, config.model_id, config.retrieval_enabled);
        println!("  {}", draft.response_text);
        for c in &draft.citations {
            println!("  cites {} ({:.3})", c.hit.chunk_id, c.hit.score);
        }
    }
    Ok(())
}
