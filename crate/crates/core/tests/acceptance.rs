//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::collections::{BTreeMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use admitrag::chunking::{chunk_document, ChunkId, ChunkingParams};
use admitrag::corpus::{Document, KnowledgeBase, SourceKind};
use admitrag::distillation::{
    grounding_score, read_dataset, run_distillation, write_dataset, DistillConfig, DistillationJob, Stopwords,
};
use admitrag::embedding::{EmbeddingVector, ReferenceEmbedder};
use admitrag::evaluation::{
    build_report, cohens_kappa, compute_metrics, BenchmarkCase, ConfigRun, FactKind, FactSpec, MatchPattern,
    ReportMetadata,
};
use admitrag::generation::{
    run_pipeline, GenerationError, GenerationRequest, Generator, Inquiry, ModelSlots, PipelineConfig, PipelineName,
    ScriptedGenerator,
};
use admitrag::index::VectorIndex;
use admitrag::retrieval::rebuild_index;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

struct Outcome {
    passed: bool,
}

fn criterion(name: &str, limit: Duration, f: impl FnOnce() -> Check) -> Outcome {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    let elapsed = start.elapsed();
    let result = result.and_then(|detail| {
        if elapsed <= limit {
            Ok(detail)
        } else {
            Err(format!("{detail}; took {elapsed:.2?}, limit {limit:?}"))
        }
    });
    match &result {
        Ok(detail) => println!("PASS  {name} ({elapsed:.2?}, limit {limit:?}): {detail}"),
        Err(why) => println!("FAIL  {name} ({elapsed:.2?}, limit {limit:?}): {why}"),
    }
    Outcome { passed: result.is_ok() }
}

// ---------------------------------------------------------------- chunking

const WORDS: &[&str] = &[
    "apply", "deadline", "budget", "quota", "ЕГЭ", "приём", "документы", "Bachelor", "x", "очная", "SNILS", "2025b",
];
const PUNCT: &[char] = &['.', ',', '!', '?', ';', ':', '-', '(', ')', '«', '»', '/', '№'];
const SPACES: &[&str] = &[" ", " ", " ", "\n", "  ", "\t", "\n\n"];

/// Builds a text of exactly `n` tokens and records each token's byte span.
fn synthetic_text(rng: &mut ChaCha8Rng, n: usize) -> (String, Vec<(usize, usize)>) {
    let mut text = String::new();
    let mut spans = Vec::with_capacity(n);
    if rng.gen_bool(0.3) {
        text.push_str(SPACES.choose(rng).unwrap());
    }
    let mut prev_alnum = false;
    for _ in 0..n {
        let alnum = rng.gen_bool(0.75);
        let token = if alnum {
            if rng.gen_bool(0.3) {
                rng.gen_range(0..100_000u32).to_string()
            } else {
                WORDS.choose(rng).unwrap().to_string()
            }
        } else {
            PUNCT.choose(rng).unwrap().to_string()
        };
        // Two letter/digit runs would merge into one token without a gap.
        if !spans.is_empty() && ((prev_alnum && alnum) || rng.gen_bool(0.5)) {
            text.push_str(SPACES.choose(rng).unwrap());
        }
        let start = text.len();
        text.push_str(&token);
        spans.push((start, text.len()));
        prev_alnum = alnum;
    }
    if rng.gen_bool(0.3) {
        text.push_str(SPACES.choose(rng).unwrap());
    }
    (text, spans)
}

fn expected_count(n: usize, size: usize, overlap: usize) -> usize {
    match n {
        0 => 0,
        n if n <= size => 1,
        n => 1 + (n - size).div_ceil(size - overlap),
    }
}

fn chunking_law() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
    let grid = [(512, 64), (256, 32), (128, 0)];
    let mut sizes: Vec<usize> = vec![0, 1, 127, 128, 129, 255, 256, 257, 511, 512, 513, 960, 5000];
    while sizes.len() < 1000 {
        sizes.push(rng.gen_range(0..=5000));
    }
    let mut chunks_checked = 0usize;
    for (d, &n) in sizes.iter().enumerate() {
        let (text, tok) = synthetic_text(&mut rng, n);
        let doc = Document::new(format!("doc{d}"), SourceKind::Webpage, "", text.clone());
        for &(size, overlap) in &grid {
            let params = ChunkingParams::new(size, overlap).unwrap();
            let chunks = chunk_document(&doc, &params).map_err(|e| e.to_string())?;
            let count = expected_count(n, size, overlap);
            ensure(chunks.len() == count, || format!("doc{d} N={n} ({size},{overlap}): {} chunks, want {count}", chunks.len()))?;
            let stride = size - overlap;
            for (i, c) in chunks.iter().enumerate() {
                let start = i * stride;
                let end = (start + size).min(n);
                ensure(c.chunk_id.ordinal as usize == i, || format!("doc{d}: ordinal {} at {i}", c.chunk_id.ordinal))?;
                ensure((c.start_token, c.end_token) == (start, end), || {
                    format!("doc{d} N={n} ({size},{overlap}) chunk {i}: [{},{}) want [{start},{end})", c.start_token, c.end_token)
                })?;
                let want_text = &text[tok[start].0..tok[end - 1].1];
                ensure(c.text == want_text, || format!("doc{d} chunk {i}: text differs from its token span"))?;
            }
            // Coverage: spans start at 0, end at N, and leave no gaps.
            if let (Some(first), Some(last)) = (chunks.first(), chunks.last()) {
                ensure(first.start_token == 0 && last.end_token == n, || format!("doc{d}: spans do not cover [0,{n})"))?;
            }
            for (i, pair) in chunks.windows(2).enumerate() {
                ensure(pair[1].start_token <= pair[0].end_token, || format!("doc{d}: gap after chunk {i}"))?;
                let shared = pair[0].end_token - pair[1].start_token;
                let last_pair = i + 2 == chunks.len();
                ensure(shared == overlap || (last_pair && shared <= overlap), || {
                    format!("doc{d}: chunks {i},{} share {shared} tokens, want {overlap}", i + 1)
                })?;
            }
            chunks_checked += chunks.len();
        }
    }
    let doc = Document::new("n960", SourceKind::Webpage, "", synthetic_text(&mut rng, 960).0);
    let spans: Vec<_> = chunk_document(&doc, &ChunkingParams::default())
        .unwrap()
        .iter()
        .map(|c| (c.start_token, c.end_token))
        .collect();
    ensure(spans == [(0, 512), (448, 960)], || format!("N=960 defaults gave {spans:?}"))?;
    Ok(format!("{} docs x 3 parameter sets, {chunks_checked} chunks, N=960 -> [0,512),[448,960)", sizes.len()))
}

// --------------------------------------------------------------- retrieval

fn random_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    match rng.gen_range(0..10) {
        // Sparse ternary vectors collide often, exercising the tie rule.
        0..=2 => (0..dim).map(|_| [-1.0, 0.0, 0.0, 0.0, 1.0][rng.gen_range(0..5)]).collect(),
        3 => vec![0.0; dim],
        _ => (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect(),
    }
}

fn oracle_cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
    let na: f64 = a.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// Linear scan, full sort by (score desc, doc id asc, ordinal asc).
fn oracle_top(entries: &[(ChunkId, EmbeddingVector)], q: &[f32], k: usize) -> Vec<(String, u32, f64)> {
    let mut all: Vec<(String, u32, f64)> = entries
        .iter()
        .map(|(id, v)| (id.doc_id.clone(), id.ordinal, oracle_cosine(q, v.values())))
        .collect();
    all.sort_by(|a, b| b.2.total_cmp(&a.2).then_with(|| a.0.cmp(&b.0)).then_with(|| a.1.cmp(&b.1)));
    all.truncate(k);
    all
}

fn retrieval_oracle() -> Check {
    const DIM: usize = 256;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut ties_seen = 0usize;
    let mut queries = 0usize;
    for idx in 0..100 {
        let n = if idx < 5 { [1, 2, 3, 4, 1000][idx] } else { rng.gen_range(1..=1000) };
        let mut ids = HashSet::new();
        let mut entries = Vec::with_capacity(n);
        let mut raw: Vec<Vec<f32>> = Vec::with_capacity(n);
        while entries.len() < n {
            let id = ChunkId::new(format!("doc-{:02}", rng.gen_range(0..40)), rng.gen_range(0..60));
            if !ids.insert(id.clone()) {
                continue;
            }
            let v = if !raw.is_empty() && rng.gen_bool(0.15) {
                raw[rng.gen_range(0..raw.len())].clone()
            } else {
                random_vector(&mut rng, DIM)
            };
            raw.push(v.clone());
            entries.push((id, EmbeddingVector::normalized(v).unwrap()));
        }
        let index = VectorIndex::new(DIM, entries, idx as u64).map_err(|e| e.to_string())?;
        for _ in 0..10 {
            let q = if rng.gen_bool(0.3) {
                index.entries()[rng.gen_range(0..index.len())].1.values().to_vec()
            } else {
                random_vector(&mut rng, DIM)
            };
            let query = EmbeddingVector::normalized(q).unwrap();
            let got = index.search(&query, 3).map_err(|e| e.to_string())?;
            let want = oracle_top(index.entries(), query.values(), 3);
            ensure(got.len() == want.len(), || format!("index {idx}: {} hits, oracle {}", got.len(), want.len()))?;
            for (rank0, (h, w)) in got.iter().zip(&want).enumerate() {
                ensure(h.rank == rank0 + 1 && h.chunk_id.doc_id == w.0 && h.chunk_id.ordinal == w.1, || {
                    format!("index {idx}: rank {} is {} but oracle has {}#{}", rank0 + 1, h.chunk_id, w.0, w.1)
                })?;
                ensure((h.score - w.2).abs() <= 1e-6, || format!("index {idx}: score {} vs oracle {}", h.score, w.2))?;
            }
            if want.windows(2).any(|p| p[0].2 == p[1].2) {
                ties_seen += 1;
            }
            queries += 1;
        }
    }
    ensure(ties_seen > 0, || "no tied scores were exercised".into())?;
    Ok(format!("{queries} queries over 100 indexes match the full-sort oracle ({ties_seen} with tied scores in the top 3)"))
}

// ------------------------------------------------------------------- kappa

fn oracle_kappa(a: &[u8], b: &[u8]) -> f64 {
    let n = a.len() as f64;
    let mut m = [[0f64; 3]; 3];
    for (&x, &y) in a.iter().zip(b) {
        m[x as usize][y as usize] += 1.0;
    }
    let po = (0..3).map(|i| m[i][i]).sum::<f64>() / n;
    let pe: f64 = (0..3)
        .map(|c| (m[c].iter().sum::<f64>() / n) * ((0..3).map(|r| m[r][c]).sum::<f64>() / n))
        .sum();
    if (1.0 - pe).abs() < 1e-15 {
        1.0
    } else {
        (po - pe) / (1.0 - pe)
    }
}

fn kappa_oracle() -> Check {
    let perfect = [0u8, 1, 2, 2, 1, 0, 2];
    let k = cohens_kappa(&perfect, &perfect).map_err(|e| e.to_string())?;
    ensure(k == 1.0, || format!("perfect agreement gave {k}"))?;
    let all_two = [2u8; 6];
    ensure(cohens_kappa(&all_two, &all_two).unwrap() == 1.0, || "single-category agreement is not 1".into())?;

    let a = [2u8, 2, 2, 2, 1, 1, 1, 0, 0, 0];
    let b = [2u8, 2, 2, 1, 1, 1, 0, 0, 0, 0];
    let worked = cohens_kappa(&a, &b).unwrap();
    let hand = (0.8 - 0.33) / (1.0 - 0.33);
    ensure((worked - 0.7015).abs() <= 1e-4 && (worked - hand).abs() <= 1e-12, || format!("worked fixture gave {worked}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut relabels = 0;
    for _ in 0..200 {
        let n = rng.gen_range(2..60);
        let a: Vec<u8> = (0..n).map(|_| rng.gen_range(0..3)).collect();
        let b: Vec<u8> = a.iter().map(|&x| if rng.gen_bool(0.7) { x } else { rng.gen_range(0..3) }).collect();
        let mut perm = [0u8, 1, 2];
        perm.shuffle(&mut rng);
        let pa: Vec<u8> = a.iter().map(|&x| perm[x as usize]).collect();
        let pb: Vec<u8> = b.iter().map(|&x| perm[x as usize]).collect();
        let k = cohens_kappa(&a, &b).unwrap();
        let kp = cohens_kappa(&pa, &pb).unwrap();
        let o = oracle_kappa(&a, &b);
        ensure((k - kp).abs() <= 1e-12, || format!("relabel {perm:?} changed kappa {k} -> {kp}"))?;
        ensure((k - o).abs() <= 1e-9, || format!("kappa {k} differs from oracle {o}"))?;
        ensure((-1.0..=1.0).contains(&k), || format!("kappa {k} out of range"))?;
        relabels += 1;
    }
    Ok(format!("perfect -> 1.0, worked fixture -> {worked:.4}, {relabels} relabelings invariant"))
}

// ----------------------------------------------------------------- metrics

const PROGRAMMES: [&str; 20] = [
    "astronomy", "biochemistry", "cartography", "demography", "ecology", "forestry", "geodesy", "hydrology",
    "informatics", "journalism", "kinesiology", "linguistics", "metallurgy", "neuroscience", "oceanography",
    "pharmacology", "quantitative", "robotics", "seismology", "toxicology",
];

/// Answers with the prompt's context block verbatim.
struct ContextEcho;

impl Generator for ContextEcho {
    fn complete(&self, req: &GenerationRequest) -> Result<String, GenerationError> {
        let p = &req.prompt;
        Ok(match (p.find("\nCONTEXT:\n"), p.find("\nQUESTION: ")) {
            (Some(a), Some(b)) if a < b => p[a + "\nCONTEXT:\n".len()..b].to_string(),
            _ => "I cannot confirm that from the available information.".to_string(),
        })
    }
}

fn synthetic_corpus() -> (KnowledgeBase, Vec<BenchmarkCase>) {
    let mut kb = KnowledgeBase::new("synthetic");
    let mut cases = Vec::new();
    for (i, p) in PROGRAMMES.iter().enumerate() {
        let day = i + 1;
        let quota = 10 + 3 * i;
        let url = format!("https://abit.example.edu/{p}/apply");
        let text = format!(
            "The {p} programme admits first-year students to the {p} faculty. \
             The {p} quota is {quota} places. Applications for {p} close on {day:02}.07.2025. \
             Apply for {p} at {url} before the deadline."
        );
        kb.upsert(Document::new(format!("prog-{p}"), SourceKind::Regulation, format!("{p} admission"), text), &[])
            .unwrap();
        cases.push(BenchmarkCase {
            inquiry_id: format!("case-{i:02}"),
            inquiry_text: format!("When do {p} applications close and what is the {p} quota?"),
            gold_facts: vec![
                FactSpec {
                    fact_id: "quota".into(),
                    kind: FactKind::GeneralFact,
                    patterns: vec![MatchPattern::Literal(format!("{p} quota is {quota} places"))],
                    canonical_value: String::new(),
                },
                FactSpec {
                    fact_id: "close-date".into(),
                    kind: FactKind::PreciseDate,
                    patterns: vec![MatchPattern::Literal(format!("{day:02}.07.2025"))],
                    canonical_value: format!("2025-07-{day:02}"),
                },
                FactSpec {
                    fact_id: "apply-url".into(),
                    kind: FactKind::PreciseUrl,
                    patterns: vec![MatchPattern::Literal(url.clone())],
                    canonical_value: url,
                },
            ],
            topic_tag: "synthetic".into(),
        });
    }
    (kb, cases)
}

fn score_run(kb: &KnowledgeBase, cases: &[BenchmarkCase]) -> Result<(f64, f64, usize), String> {
    let provider = ReferenceEmbedder::default();
    let snap = rebuild_index(kb, &ChunkingParams::default(), &provider).map_err(|e| e.to_string())?;
    let config = PipelineConfig::new(PipelineName::FinetunedRag, &ModelSlots::default());
    let mut run = ConfigRun::default();
    let mut citations = 0;
    for c in cases {
        let inquiry = Inquiry::new(c.inquiry_id.clone(), c.inquiry_text.clone());
        let draft = run_pipeline(&config, &inquiry, &snap, &provider, &ContextEcho).map_err(|e| e.to_string())?;
        citations += draft.citations.len();
        run.responses.insert(c.inquiry_id.clone(), draft.response_text);
    }
    let m = compute_metrics(&run, cases, &[], PipelineName::FinetunedRag).map_err(|e| e.to_string())?;
    Ok((m.fact_recall_pct, m.precise_data_recall_pct, citations))
}

fn metrics_mechanics() -> Check {
    let (mut kb, cases) = synthetic_corpus();
    let facts: usize = cases.iter().map(|c| c.gold_facts.len()).sum();
    ensure(cases.len() == 20 && facts == 60, || format!("{} cases / {facts} facts", cases.len()))?;
    let (fact, precise, citations) = score_run(&kb, &cases)?;
    ensure(citations == 60, || format!("{citations} citations, want 3 per case"))?;
    ensure(fact == 100.0 && precise == 100.0, || format!("full KB gave fact {fact}, precise {precise}"))?;

    kb.remove("prog-astronomy").map_err(|e| e.to_string())?;
    let (fact2, precise2, _) = score_run(&kb, &cases)?;
    // One case of twenty loses its general fact and both precise facts.
    let want_fact = 57.0 / 60.0 * 100.0;
    let want_precise = 38.0 / 40.0 * 100.0;
    ensure(fact2 < fact && precise2 < precise, || format!("after removal: fact {fact2}, precise {precise2}"))?;
    ensure((fact2 - want_fact).abs() < 1e-9 && (precise2 - want_precise).abs() < 1e-9, || {
        format!("after removal: fact {fact2} (want {want_fact}), precise {precise2} (want {want_precise})")
    })?;
    Ok(format!("20 cases / 60 facts: {fact:.1} / {precise:.1}; without one document: {fact2:.1} / {precise2:.1}"))
}

// ------------------------------------------------------ comparison table

const TABLE_ONE: [(&str, PipelineName, [f64; 3]); 4] = [
    ("Baseline GPT", PipelineName::Baseline, [22.3, 25.6, 3.2]),
    ("RAG Model", PipelineName::RagOnly, [75.1, 91.4, 7.5]),
    ("Fine-Tuned (No RAG)", PipelineName::FinetunedOnly, [72.7, 48.3, 7.9]),
    ("Fine-Tuned with RAG", PipelineName::FinetunedRag, [92.7, 88.3, 8.9]),
];

fn comparison_table() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fixture = common::fixture("comparison_aggregates.json");
    let out = dir.path().join("report");
    let run = std::process::Command::new(env!("CARGO_BIN_EXE_admitrag"))
        .args(["evaluate", "--aggregates"])
        .arg(&fixture)
        .args(["--configs", "all", "--out"])
        .arg(&out)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(run.status.success(), || format!("evaluate exited with {}", run.status))?;
    let csv = std::fs::read_to_string(out.join("report.csv")).map_err(|e| e.to_string())?;

    let mut want = String::from("Model, Fact Recall (%), Precise Data Recall (%), User Satisfaction (1-10)\n");
    for (label, _, [f, p, s]) in TABLE_ONE {
        want.push_str(&format!("{label}, {f:.1}, {p:.1}, {s:.1}\n"));
    }
    ensure(csv == want, || format!("report.csv differs:\n{csv}"))?;

    let mut cells = 0;
    for (line, (label, _, values)) in csv.lines().skip(1).zip(TABLE_ONE) {
        let fields: Vec<&str> = line.split(", ").collect();
        ensure(fields[0] == label, || format!("row label {} want {label}", fields[0]))?;
        for (cell, v) in fields[1..].iter().zip(values) {
            ensure(cell.parse::<f64>().ok() == Some(v), || format!("{label}: cell {cell} want {v}"))?;
            cells += 1;
        }
    }
    ensure(csv.contains("Fine-Tuned with RAG, 92.7, 88.3, 8.9\n"), || "headline row missing".into())?;

    // Same inputs through the library give byte-identical output.
    let configs: BTreeMap<_, _> = TABLE_ONE
        .iter()
        .map(|(_, name, [f, p, s])| {
            (
                *name,
                admitrag::evaluation::ConfigMetrics {
                    fact_recall_pct: *f,
                    precise_data_recall_pct: *p,
                    user_satisfaction_mean: Some(*s),
                    send_worthiness: None,
                },
            )
        })
        .collect();
    let meta = ReportMetadata { benchmark_id: "t".into(), case_count: 210, timestamp: chrono::Utc::now() };
    ensure(build_report(meta, configs).to_csv() == csv, || "library rendering differs from CLI output".into())?;
    Ok(format!("{cells} of 12 cells byte-exact in report.csv"))
}

// ------------------------------------------------------------ distillation

fn distillation_gate() -> Check {
    let docs = vec![
        Document::new(
            "rules",
            SourceKind::Regulation,
            "Admission rules",
            "Applications for budget-funded places close on 25 July 2025. Ranked lists are published daily on the website.",
        ),
        Document::new(
            "dorm",
            SourceKind::Faq,
            "Dormitory",
            "Dormitory places are provided to out-of-town students. Settlement starts on 28 August 2025. Monthly rent is 1500 roubles.",
        ),
    ];
    let job = DistillationJob::new(docs.clone(), 8).with_min_grounding(0.6);
    let ungrounded = "Every applicant receives a free laptop and a monthly stipend of 90000 roubles.";
    let transcript = format!(
        "Sure, here are the pairs you asked for:\n{}\nLet me know if you need more.",
        json!([
            {"question": "When do budget applications close?", "answer": "Applications for budget-funded places close on 25 July 2025."},
            {"question": "How often are ranked lists published?", "answer": "Ranked lists are published daily on the website."},
            {"question": "Who gets dormitory places?", "answer": "Dormitory places are provided to out-of-town students."},
            {"question": "When does settlement start?", "answer": "Settlement starts on 28 August 2025."},
            {"question": "How much is the rent?", "answer": "Monthly rent is 1500 roubles."},
            {"question": "Is there a laptop grant?", "answer": ungrounded},
            {"question": "What is missing here?"},
            {"question": "When do budget applications close?", "answer": "Applications for budget-funded places close on 25 July 2025."}
        ])
    );
    let generator = ScriptedGenerator::new().with_entry(job.script_key(), transcript);
    let out = run_distillation(&[job], &generator, &DistillConfig::default()).map_err(|e| e.to_string())?;

    let sources: Vec<&str> = docs.iter().map(|d| d.text.as_str()).collect();
    let ungrounded_score = grounding_score(ungrounded, &sources, &Stopwords::default());
    ensure(ungrounded_score < 0.6, || format!("ungrounded answer scored {ungrounded_score}"))?;

    let r = out.report;
    ensure(
        r.accepted == 5 && r.rejected_ungrounded == 1 && r.rejected_malformed == 1 && r.deduplicated == 1,
        || format!("report {r:?}"),
    )?;
    ensure(out.records.len() == 5, || format!("{} records", out.records.len()))?;
    ensure(out.records.iter().all(|rec| rec.grounding_score >= 0.6 && rec.input.is_empty()), || {
        "a record is below the grounding threshold or has input".into()
    })?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("dataset.jsonl");
    write_dataset(&path, &out.records).map_err(|e| e.to_string())?;
    let back = read_dataset(&path).map_err(|e| e.to_string())?;
    ensure(back == out.records, || "dataset file does not round-trip".into())?;
    Ok(format!(
        "accepted={} rejected_ungrounded={} rejected_malformed={} deduplicated={}, file round-trips",
        r.accepted, r.rejected_ungrounded, r.rejected_malformed, r.deduplicated
    ))
}

// ----------------------------------------------------------------- service

fn service_loop() -> Check {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let server = common::start_service(root.path());
    for doc in common::fixture_documents() {
        let r = common::api(&server, "POST", "/v1/kb/documents", Some(doc));
        ensure(r.status == 202, || format!("document upsert returned {}", r.status))?;
    }
    common::wait_for_index(&server, Duration::from_secs(10)).ok_or("initial index never caught up")?;

    let created = common::api(
        &server,
        "POST",
        "/v1/inquiries",
        Some(json!({"text": "When is the application deadline for budget-funded places?", "channel": "email", "inquiry_id": "q-deadline"})),
    );
    ensure(created.status == 201, || format!("inquiry returned {}: {}", created.status, created.body))?;
    let citations = created.body["citations"].as_array().map_or(0, Vec::len);
    ensure(citations == 3, || format!("{citations} citations"))?;
    let draft_id = created.body["draft_id"].as_str().ok_or("no draft_id")?.to_string();

    let pending = common::api(&server, "GET", "/v1/drafts?status=pending_review", None);
    ensure(pending.body.as_array().is_some_and(|a| a.iter().any(|d| d["draft_id"] == draft_id.as_str())), || {
        "new draft is not pending".into()
    })?;
    let rated = common::api(
        &server,
        "POST",
        &format!("/v1/drafts/{draft_id}/rating"),
        Some(json!({"rater_id": "rater-a", "score": 2})),
    );
    ensure(rated.status == 204, || format!("rating returned {}", rated.status))?;
    let pending = common::api(&server, "GET", "/v1/drafts?status=pending_review", None);
    ensure(pending.body.as_array().is_some_and(|a| a.iter().all(|d| d["draft_id"] != draft_id.as_str())), || {
        "rated draft is still pending".into()
    })?;

    let upsert = common::api(
        &server,
        "POST",
        "/v1/kb/documents",
        Some(json!({"doc_id": "open-day", "source_kind": "webpage", "title": "Open day",
                    "text": "The open day takes place on 12 April 2025 in the main building."})),
    );
    ensure(upsert.status == 202, || format!("upsert returned {}", upsert.status))?;
    let kb_revision = upsert.body["kb_revision"].as_u64().ok_or("no kb_revision")?;
    let converged = common::wait_for_index(&server, Duration::from_secs(10)).ok_or("watermark did not converge in 10 s")?;
    let status = common::api(&server, "GET", "/v1/kb/status", None).body;
    ensure(status["index_watermark"].as_u64() == Some(kb_revision), || format!("status {status}"))?;

    // A second pending draft so the restart comparison covers both states.
    let second = common::api(&server, "POST", "/v1/inquiries", Some(json!({"text": "When is the open day?", "channel": "web"})));
    ensure(second.status == 201, || format!("second inquiry returned {}", second.status))?;

    let before = common::api(&server, "GET", "/v1/drafts?limit=500", None).body;
    let detail_before = common::api(&server, "GET", &format!("/v1/drafts/{draft_id}"), None).body;
    server.stop().map_err(|e| e.to_string())?;

    let server = common::start_service(root.path());
    let after = common::api(&server, "GET", "/v1/drafts?limit=500", None).body;
    let detail_after = common::api(&server, "GET", &format!("/v1/drafts/{draft_id}"), None).body;
    let status_after = common::api(&server, "GET", "/v1/kb/status", None).body;
    server.stop().map_err(|e| e.to_string())?;
    ensure(before == after && detail_before == detail_after, || format!("queue changed across restart:\n{before}\n{after}"))?;
    ensure(status_after["kb_revision"].as_u64() == Some(kb_revision), || format!("kb revision after restart: {status_after}"))?;
    Ok(format!(
        "201 with 3 citations, rated draft left the queue, watermark {kb_revision} reached in {converged:.2?}, {} drafts identical after restart",
        after.as_array().map_or(0, Vec::len)
    ))
}

fn main() {
    let outcomes = [
        criterion("chunking law", Duration::from_secs(5), chunking_law),
        criterion("retrieval oracle equivalence", Duration::from_secs(30), retrieval_oracle),
        criterion("kappa oracle", Duration::from_secs(5), kappa_oracle),
        criterion("metrics mechanics", Duration::from_secs(60), metrics_mechanics),
        criterion("comparison table rendering", Duration::from_secs(5), comparison_table),
        criterion("distillation gate", Duration::from_secs(5), distillation_gate),
        criterion("service loop", Duration::from_secs(60), service_loop),
    ];
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("{} passed, {failed} failed", outcomes.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
