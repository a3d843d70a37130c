//! Turns knowledge-base documents into instruction/response pairs with a
//! scripted teacher, gates them on grounding, and writes the dataset.
//!
//! cargo run --example distillation

use std::path::Path;

use admitrag::corpus::Document;
use admitrag::distillation::{
    batch_jobs, build_distillation_prompt, grounding_score, parse_pairs, read_dataset, run_distillation,
    write_dataset, DistillConfig, Stopwords,
};
use admitrag::generation::ScriptedGenerator;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let docs: Vec<Document> = std::fs::read_to_string(fixtures.join("documents.jsonl"))?
        .lines()
        .map(serde_json::from_str)
        .collect::<Result<_, _>>()?;
    let teacher = ScriptedGenerator::from_file(&fixtures.join("script.json"))?;

    let picked = docs.iter().filter(|d| d.doc_id == "admission-rules" || d.doc_id == "dormitory");
    let jobs = batch_jobs(picked, 1, 2, 0.6);
    let prompt = build_distillation_prompt(&jobs[0], 100_000)?;
    println!("first prompt ({} bytes):\n{}\n", prompt.len(), prompt.lines().take(6).collect::<Vec<_>>().join("\n"));

    let raw = r#"[{"question": "When do applications close?", "answer": "Applications close on 25.07.2025."},
                  {"question": "Broken"}]"#;
    let parsed = parse_pairs(raw);
    println!("parsed {} pairs, {} rejects", parsed.pairs.len(), parsed.rejects.len());
    let score = grounding_score(&parsed.pairs[0].answer, &[&docs[0].text], &Stopwords::default());
    println!("grounding of the first answer against {}: {score:.2}\n", docs[0].doc_id);

    let out = run_distillation(&jobs, &teacher, &DistillConfig::default())?;
    println!("{}", serde_json::to_string_pretty(&out.report)?);
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("dataset.jsonl");
    write_dataset(&path, &out.records)?;
    for r in read_dataset(&path)? {
        println!("{:?} <- {:?} (grounding {:.2})", r.instruction, r.source_doc_ids, r.grounding_score);
    }
    Ok(())
}
