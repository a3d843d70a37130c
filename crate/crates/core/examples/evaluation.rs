//! Scores responses against the benchmark, then renders the comparison table
//! from the pre-aggregated fixture metrics.
//!
//! cargo run --example evaluation

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use admitrag::evaluation::{
    build_report, compute_metrics, fact_recall, load_benchmark, precise_data_recall, Aggregates, ConfigRun,
    ReportMetadata,
};
use admitrag::generation::PipelineName;
use chrono::Utc;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let benchmark = load_benchmark(fixtures.join("benchmark.jsonl"))?;
    let script: HashMap<String, String> = serde_json::from_str(&std::fs::read_to_string(fixtures.join("script.json"))?)?;

    // Scripted answers for the full pipeline, and a canned reply for the baseline.
    let good: HashMap<String, String> =
        benchmark.iter().map(|c| (c.inquiry_id.clone(), script[&c.inquiry_id].clone())).collect();
    let vague: HashMap<String, String> = benchmark
        .iter()
        .map(|c| (c.inquiry_id.clone(), "Please see the admissions page for details.".to_string()))
        .collect();
    println!("fact recall: scripted {:.1}%, vague {:.1}%", fact_recall(&good, &benchmark)?, fact_recall(&vague, &benchmark)?);
    println!("precise data recall: scripted {:.1}%", precise_data_recall(&good, &benchmark)?);

    let mut configs = BTreeMap::new();
    for (name, responses) in [(PipelineName::Baseline, vague), (PipelineName::FinetunedRag, good)] {
        let run = ConfigRun { responses, ..ConfigRun::default() };
        configs.insert(name, compute_metrics(&run, &benchmark, &[], name)?);
    }
    let meta = ReportMetadata { benchmark_id: "fixture".into(), case_count: benchmark.len(), timestamp: Utc::now() };
    println!("\n{}", build_report(meta, configs).to_markdown());

    let table = Aggregates::load(fixtures.join("comparison_aggregates.json"))?.into_report(Utc::now());
    print!("\n{}", table.to_csv());
    Ok(())
}
