//! Distills knowledge-base documents into Alpaca-format question/answer
//! records through a generation endpoint, keeping only pairs whose answers
//! are grounded in the source text.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::chunking::tokenize;
use crate::corpus::Document;
use crate::generation::{generate, GenParams, GenerationError, GenerationRequest, Generator};

pub const QA_TEMPLATE_ID: &str = "qa-json-v1";
pub const DEFAULT_MIN_GROUNDING: f64 = 0.6;

#[derive(Debug, thiserror::Error)]
pub enum DistillError {
    #[error("batch is empty")]
    EmptyBatch,
    #[error("pairs_requested must be at least 1")]
    NoPairsRequested,
    #[error("min_grounding {0} is outside [0, 1]")]
    BadThreshold(f64),
    #[error("unknown distillation template `{0}`")]
    UnknownTemplate(String),
    #[error("batch of {docs} documents is {tokens} tokens, over the {budget}-token context budget; split the batch")]
    BatchTooLarge { docs: usize, tokens: usize, budget: usize },
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error("dataset line {line}: {reason}")]
    Dataset { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One supervised fine-tuning example. `input` is always empty; the two
/// trailing fields record where the pair came from and may be dropped by trainers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlpacaRecord {
    pub instruction: String,
    pub input: String,
    pub output: String,
    pub source_doc_ids: Vec<String>,
    pub grounding_score: f64,
}

#[derive(Debug, Clone)]
pub struct DistillationJob {
    pub doc_batch: Vec<Document>,
    pub pairs_requested: usize,
    pub prompt_template_id: String,
    pub min_grounding: f64,
}

impl DistillationJob {
    pub fn new(doc_batch: Vec<Document>, pairs_requested: usize) -> Self {
        DistillationJob {
            doc_batch,
            pairs_requested,
            prompt_template_id: QA_TEMPLATE_ID.to_string(),
            min_grounding: DEFAULT_MIN_GROUNDING,
        }
    }

    pub fn with_min_grounding(mut self, min_grounding: f64) -> Self {
        self.min_grounding = min_grounding;
        self
    }

    pub fn validate(&self) -> Result<(), DistillError> {
        if self.doc_batch.is_empty() {
            return Err(DistillError::EmptyBatch);
        }
        if self.pairs_requested == 0 {
            return Err(DistillError::NoPairsRequested);
        }
        if !(0.0..=1.0).contains(&self.min_grounding) {
            return Err(DistillError::BadThreshold(self.min_grounding));
        }
        Ok(())
    }

    /// Script key used when the generator is a fixture: the batch's doc ids
    /// joined with commas.
    pub fn script_key(&self) -> String {
        let ids: Vec<&str> = self.doc_batch.iter().map(|d| d.doc_id.as_str()).collect();
        format!("distill:{}", ids.join(","))
    }
}

#[derive(Debug, Clone)]
pub struct DistillConfig {
    /// Token budget for the documents in one prompt, counted with the
    /// reference tokenizer.
    pub context_budget_tokens: usize,
    pub parallelism: usize,
    pub params: GenParams,
    pub stopwords: Stopwords,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            context_budget_tokens: 100_000,
            parallelism: 4,
            params: GenParams { max_tokens: 4096, temperature: 0.2 },
            stopwords: Stopwords::default(),
        }
    }
}

/// Splits documents into fixed-size batches, one job each.
pub fn batch_jobs<'a>(
    docs: impl IntoIterator<Item = &'a Document>,
    docs_per_batch: usize,
    pairs_per_batch: usize,
    min_grounding: f64,
) -> Vec<DistillationJob> {
    let docs: Vec<Document> = docs.into_iter().cloned().collect();
    docs.chunks(docs_per_batch.max(1))
        .map(|b| DistillationJob::new(b.to_vec(), pairs_per_batch).with_min_grounding(min_grounding))
        .collect()
}

pub fn build_distillation_prompt(job: &DistillationJob, context_budget_tokens: usize) -> Result<String, DistillError> {
    job.validate()?;
    if job.prompt_template_id != QA_TEMPLATE_ID {
        return Err(DistillError::UnknownTemplate(job.prompt_template_id.clone()));
    }
    let tokens: usize = job
        .doc_batch
        .iter()
        .map(|d| tokenize(&d.title).len() + tokenize(&d.text).len())
        .sum();
    if tokens > context_budget_tokens {
        return Err(DistillError::BatchTooLarge {
            docs: job.doc_batch.len(),
            tokens,
            budget: context_budget_tokens,
        });
    }
    let mut p = String::new();
    p.push_str("You are preparing training data for a university admissions assistant.\n");
    p.push_str(&format!(
        "Write {} question-answer pairs that an applicant might ask, based only on the information contained in the documents below. \
Do not use outside knowledge and do not add facts the documents do not state.\n",
        job.pairs_requested
    ));
    p.push_str(
        "Respond with a strict JSON array of objects, each with exactly two string fields, \"question\" and \"answer\". \
Output nothing except the array.\n",
    );
    for doc in &job.doc_batch {
        p.push_str(&format!("\n=== DOCUMENT {} ===\n", doc.doc_id));
        if !doc.title.is_empty() {
            p.push_str(&doc.title);
            p.push('\n');
        }
        p.push_str(&doc.text);
        p.push('\n');
    }
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QaPair {
    pub question: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Reject {
    /// Position in the parsed array; `None` when nothing could be parsed.
    pub item: Option<usize>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedPairs {
    pub pairs: Vec<QaPair>,
    pub rejects: Vec<Reject>,
}

/// Finds the first JSON array in `text` that is empty or holds at least one
/// object, skipping surrounding prose and bracketed asides like `[1]`.
fn first_object_array(text: &str) -> Option<Vec<Value>> {
    for (i, _) in text.match_indices('[') {
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        if let Some(Ok(Value::Array(items))) = stream.next() {
            if items.is_empty() || items.iter().any(Value::is_object) {
                return Some(items);
            }
        }
    }
    None
}

/// Extracts question/answer pairs from model output. Never fails: output
/// without a usable array yields one `unparseable` reject.
pub fn parse_pairs(llm_output: &str) -> ParsedPairs {
    let Some(items) = first_object_array(llm_output) else {
        return ParsedPairs {
            pairs: Vec::new(),
            rejects: vec![Reject { item: None, reason: "unparseable".into() }],
        };
    };
    let mut out = ParsedPairs::default();
    for (i, item) in items.iter().enumerate() {
        let field = |name: &str| item.get(name).and_then(Value::as_str).map(str::trim);
        let reason = match (field("question"), field("answer")) {
            _ if !item.is_object() => Some("not an object"),
            (None, _) => Some("missing question"),
            (_, None) => Some("missing answer"),
            (Some(""), _) => Some("empty question"),
            (_, Some("")) => Some("empty answer"),
            (Some(q), Some(a)) => {
                out.pairs.push(QaPair { question: q.to_string(), answer: a.to_string() });
                None
            }
        };
        if let Some(reason) = reason {
            out.rejects.push(Reject { item: Some(i), reason: reason.into() });
        }
    }
    out
}

const ENGLISH_STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "been", "but", "by", "can", "could", "do", "does", "for", "from", "has",
    "have", "how", "i", "if", "in", "into", "is", "it", "its", "may", "must", "my", "no", "not", "of", "on", "or",
    "our", "should", "so", "such", "than", "that", "the", "their", "then", "there", "these", "they", "this", "to",
    "was", "we", "were", "what", "when", "where", "which", "who", "will", "with", "would", "you", "your",
];

const RUSSIAN_STOPWORDS: &[&str] = &[
    "а", "без", "бы", "в", "во", "вы", "да", "для", "до", "если", "есть", "же", "за", "и", "из", "или", "как", "к",
    "ко", "ли", "мы", "на", "не", "нет", "но", "о", "об", "от", "по", "при", "с", "со", "так", "также", "то", "у",
    "что", "это", "этот", "я",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopwordLanguage {
    English,
    Russian,
    Both,
}

#[derive(Debug, Clone)]
pub struct Stopwords {
    words: HashSet<&'static str>,
}

impl Stopwords {
    pub fn for_language(lang: StopwordLanguage) -> Self {
        let words = match lang {
            StopwordLanguage::English => ENGLISH_STOPWORDS.to_vec(),
            StopwordLanguage::Russian => RUSSIAN_STOPWORDS.to_vec(),
            StopwordLanguage::Both => [ENGLISH_STOPWORDS, RUSSIAN_STOPWORDS].concat(),
        };
        Stopwords { words: words.into_iter().collect() }
    }

    pub fn contains(&self, lowercase_word: &str) -> bool {
        self.words.contains(lowercase_word)
    }
}

impl Default for Stopwords {
    fn default() -> Self {
        Self::for_language(StopwordLanguage::Both)
    }
}

/// Lowercased letter/digit tokens that are not stopwords.
fn content_tokens<'a>(text: &'a str, stopwords: &'a Stopwords) -> impl Iterator<Item = String> + 'a {
    tokenize(text)
        .into_iter()
        .filter(|t| t.text.chars().all(char::is_alphanumeric))
        .map(|t| t.text.to_lowercase())
        .filter(|w| !stopwords.contains(w))
}

/// Share of the answer's content tokens found anywhere in the sources.
pub fn grounding_score(answer: &str, source_texts: &[&str], stopwords: &Stopwords) -> f64 {
    let source: HashSet<String> = source_texts.iter().flat_map(|t| content_tokens(t, stopwords)).collect();
    let (mut total, mut found) = (0usize, 0usize);
    for tok in content_tokens(answer, stopwords) {
        total += 1;
        found += usize::from(source.contains(&tok));
    }
    if total == 0 {
        0.0
    } else {
        found as f64 / total as f64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistillationReport {
    pub generated: usize,
    pub accepted: usize,
    pub rejected_ungrounded: usize,
    pub rejected_malformed: usize,
    pub deduplicated: usize,
}

#[derive(Debug, Clone, Default)]
pub struct DistillationOutput {
    pub records: Vec<AlpacaRecord>,
    pub report: DistillationReport,
}

#[derive(Debug, thiserror::Error)]
#[error("distillation failed on {} of {total_jobs} batches: {error}", failed_jobs.len())]
pub struct DistillationFailure {
    pub error: DistillError,
    pub failed_jobs: Vec<usize>,
    pub total_jobs: usize,
    /// Records from the batches that did complete.
    pub partial: DistillationOutput,
}

struct BatchResult {
    parsed: ParsedPairs,
    doc_ids: Vec<String>,
    sources: Vec<String>,
    min_grounding: f64,
}

fn run_job(job: &DistillationJob, generator: &dyn Generator, cfg: &DistillConfig) -> Result<BatchResult, DistillError> {
    let prompt = build_distillation_prompt(job, cfg.context_budget_tokens)?;
    let req = GenerationRequest { prompt, script_key: Some(job.script_key()), params: cfg.params };
    let text = generate(generator, &req)?.text;
    Ok(BatchResult {
        parsed: parse_pairs(&text),
        doc_ids: job.doc_batch.iter().map(|d| d.doc_id.clone()).collect(),
        sources: job.doc_batch.iter().map(|d| format!("{}\n{}", d.title, d.text)).collect(),
        min_grounding: job.min_grounding,
    })
}

fn assemble(results: impl IntoIterator<Item = BatchResult>, stopwords: &Stopwords) -> DistillationOutput {
    let mut report = DistillationReport::default();
    let mut records = Vec::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    for batch in results {
        report.generated += batch.parsed.pairs.len() + batch.parsed.rejects.len();
        report.rejected_malformed += batch.parsed.rejects.len();
        let sources: Vec<&str> = batch.sources.iter().map(String::as_str).collect();
        for pair in batch.parsed.pairs {
            let score = grounding_score(&pair.answer, &sources, stopwords);
            if score < batch.min_grounding {
                report.rejected_ungrounded += 1;
                continue;
            }
            if !seen.insert((pair.question.clone(), pair.answer.clone())) {
                report.deduplicated += 1;
                continue;
            }
            records.push(AlpacaRecord {
                instruction: pair.question,
                input: String::new(),
                output: pair.answer,
                source_doc_ids: batch.doc_ids.clone(),
                grounding_score: score,
            });
        }
    }
    records.sort_by(|a, b| {
        (a.source_doc_ids.first(), &a.instruction, &a.output).cmp(&(b.source_doc_ids.first(), &b.instruction, &b.output))
    });
    report.accepted = records.len();
    DistillationOutput { records, report }
}

/// Runs every job (up to `cfg.parallelism` at once), gates pairs on
/// grounding, removes exact duplicates, and sorts the records by first
/// source doc id then instruction. If any batch fails, the records from the
/// others are returned inside the error.
pub fn run_distillation(
    jobs: &[DistillationJob],
    generator: &dyn Generator,
    cfg: &DistillConfig,
) -> Result<DistillationOutput, DistillationFailure> {
    use rayon::prelude::*;

    let run_all = || -> Vec<Result<BatchResult, DistillError>> {
        jobs.par_iter().map(|job| run_job(job, generator, cfg)).collect()
    };
    let results = match rayon::ThreadPoolBuilder::new().num_threads(cfg.parallelism.max(1)).build() {
        Ok(pool) => pool.install(run_all),
        Err(_) => run_all(),
    };

    let mut ok = Vec::with_capacity(results.len());
    let mut failed_jobs = Vec::new();
    let mut first_error = None;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(b) => ok.push(b),
            Err(e) => {
                failed_jobs.push(i);
                first_error.get_or_insert(e);
            }
        }
    }
    let output = assemble(ok, &cfg.stopwords);
    match first_error {
        None => Ok(output),
        Some(error) => Err(DistillationFailure { error, failed_jobs, total_jobs: jobs.len(), partial: output }),
    }
}

pub fn write_dataset(path: impl AsRef<Path>, records: &[AlpacaRecord]) -> Result<(), DistillError> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<AlpacaRecord>, DistillError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| DistillError::Dataset { line: i + 1, reason: e.to_string() })?);
    }
    Ok(out)
}
