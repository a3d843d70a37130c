//! Response-quality metrics, rater agreement, and the comparison report.
//!
//! Fact recall counts gold facts whose patterns appear in a response.
//! Precise facts (dates, URLs) count only when the value found in the
//! response normalizes to the fact's canonical value, so `25.07.2025` and
//! `25 July 2025` are interchangeable.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::OnceLock;

use chrono::{DateTime, NaiveDate, Utc};
use regex::{Regex, RegexBuilder};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::corpus::normalize_text;
use crate::generation::PipelineName;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("benchmark is empty")]
    EmptyBenchmark,
    #[error("benchmark has no facts")]
    NoFacts,
    #[error("no precise facts")]
    NoPreciseFacts,
    #[error("rating lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no ratings to compare")]
    EmptyRatings,
    #[error("score {0} is not on the 0/1/2 scale")]
    InvalidScore(u8),
    #[error("invalid benchmark case `{inquiry_id}`: {reason}")]
    InvalidCase { inquiry_id: String, reason: String },
    #[error("{path}: line {line}: {reason}")]
    Parse { path: String, line: usize, reason: String },
    #[error("no response files for the requested configurations in {0}")]
    NoResponses(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactKind {
    GeneralFact,
    PreciseDate,
    PreciseUrl,
}

impl FactKind {
    pub fn is_precise(self) -> bool {
        !matches!(self, FactKind::GeneralFact)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchPattern {
    Literal(String),
    Regex(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactSpec {
    pub fact_id: String,
    pub kind: FactKind,
    pub patterns: Vec<MatchPattern>,
    #[serde(default)]
    pub canonical_value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkCase {
    pub inquiry_id: String,
    pub inquiry_text: String,
    pub gold_facts: Vec<FactSpec>,
    #[serde(default)]
    pub topic_tag: String,
}

impl BenchmarkCase {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |reason: String| EvalError::InvalidCase { inquiry_id: self.inquiry_id.clone(), reason };
        if self.inquiry_text.trim().is_empty() {
            return Err(bad("empty inquiry text".into()));
        }
        let mut ids = HashSet::new();
        for f in &self.gold_facts {
            if !ids.insert(&f.fact_id) {
                return Err(bad(format!("duplicate fact id `{}`", f.fact_id)));
            }
            if f.patterns.is_empty() {
                return Err(bad(format!("fact `{}` has no patterns", f.fact_id)));
            }
            if f.kind.is_precise() && f.canonical_value.is_empty() {
                return Err(bad(format!("precise fact `{}` has no canonical value", f.fact_id)));
            }
            for p in &f.patterns {
                if let MatchPattern::Regex(r) = p {
                    Regex::new(r).map_err(|e| bad(format!("fact `{}`: {e}", f.fact_id)))?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewRating {
    pub draft_id: String,
    pub rater_id: String,
    pub score: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edited_text: Option<String>,
}

impl ReviewRating {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.score > 2 {
            return Err(EvalError::InvalidScore(self.score));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SatisfactionEntry {
    pub respondent_id: String,
    pub score: u8,
    pub config_name: PipelineName,
}

/// A human verdict overriding pattern matching for one fact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub inquiry_id: String,
    pub fact_id: String,
    pub matched: bool,
}

pub type Judgments = HashMap<(String, String), bool>;

pub fn judgments_map(list: impl IntoIterator<Item = Judgment>) -> Judgments {
    list.into_iter().map(|j| ((j.inquiry_id, j.fact_id), j.matched)).collect()
}

/// Reads a JSON-Lines file of `T`, skipping blank lines.
pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, EvalError> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| EvalError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn load_benchmark(path: impl AsRef<Path>) -> Result<Vec<BenchmarkCase>, EvalError> {
    let cases: Vec<BenchmarkCase> = read_jsonl(path)?;
    for c in &cases {
        c.validate()?;
    }
    Ok(cases)
}

/// One line of a `<config>.jsonl` responses file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub inquiry_id: String,
    pub response: String,
}

/// Loads pre-generated runs from `dir`. For each configuration the
/// responses live in `<config>.jsonl`, with optional
/// `<config>.judgments.jsonl` (per-fact overrides) and
/// `<config>.ratings.jsonl` (0/1/2 review ratings) beside it.
/// Configurations without a responses file are left out.
pub fn load_runs(dir: impl AsRef<Path>, configs: &[PipelineName]) -> Result<BTreeMap<PipelineName, ConfigRun>, EvalError> {
    let dir = dir.as_ref();
    let mut runs = BTreeMap::new();
    for &name in configs {
        let responses_path = dir.join(format!("{}.jsonl", name.as_str()));
        if !responses_path.is_file() {
            continue;
        }
        let responses = read_jsonl::<ResponseRecord>(&responses_path)?
            .into_iter()
            .map(|r| (r.inquiry_id, r.response))
            .collect();
        let judgments_path = dir.join(format!("{}.judgments.jsonl", name.as_str()));
        let judgments = if judgments_path.is_file() {
            judgments_map(read_jsonl::<Judgment>(&judgments_path)?)
        } else {
            Judgments::new()
        };
        let ratings_path = dir.join(format!("{}.ratings.jsonl", name.as_str()));
        let mut ratings = Vec::new();
        if ratings_path.is_file() {
            for r in read_jsonl::<ReviewRating>(&ratings_path)? {
                r.validate()?;
                ratings.push(r.score);
            }
        }
        runs.insert(name, ConfigRun { responses, judgments, ratings });
    }
    if runs.is_empty() {
        return Err(EvalError::NoResponses(dir.display().to_string()));
    }
    Ok(runs)
}

/// Pre-aggregated metrics, for rendering results computed elsewhere
/// (for instance by human judges) through the same report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub benchmark_id: String,
    pub case_count: usize,
    pub configs: BTreeMap<PipelineName, ConfigMetrics>,
}

impl Aggregates {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path)?;
        serde_json::from_str(&raw).map_err(|e| EvalError::Parse {
            path: path.display().to_string(),
            line: e.line(),
            reason: e.to_string(),
        })
    }

    pub fn into_report(self, timestamp: DateTime<Utc>) -> EvaluationReport {
        let metadata = ReportMetadata { benchmark_id: self.benchmark_id, case_count: self.case_count, timestamp };
        build_report(metadata, self.configs)
    }
}

const MONTHS: &[(&str, u32)] = &[
    ("january", 1), ("jan", 1), ("february", 2), ("feb", 2), ("march", 3), ("mar", 3), ("april", 4), ("apr", 4),
    ("may", 5), ("june", 6), ("jun", 6), ("july", 7), ("jul", 7), ("august", 8), ("aug", 8), ("september", 9),
    ("sept", 9), ("sep", 9), ("october", 10), ("oct", 10), ("november", 11), ("nov", 11), ("december", 12),
    ("dec", 12),
    // Russian genitive (as written in dates) and nominative forms
    ("января", 1), ("январь", 1), ("февраля", 2), ("февраль", 2), ("марта", 3), ("март", 3), ("апреля", 4),
    ("апрель", 4), ("мая", 5), ("май", 5), ("июня", 6), ("июнь", 6), ("июля", 7), ("июль", 7), ("августа", 8),
    ("август", 8), ("сентября", 9), ("сентябрь", 9), ("октября", 10), ("октябрь", 10), ("ноября", 11),
    ("ноябрь", 11), ("декабря", 12), ("декабрь", 12),
];

fn month_number(name: &str) -> Option<u32> {
    let lower = name.to_lowercase();
    MONTHS.iter().find(|(m, _)| *m == lower).map(|&(_, n)| n)
}

const DOTTED_DATE: &str = r"(\d{1,2})\.(\d{1,2})\.(\d{4})";
const ISO_DATE: &str = r"(\d{4})-(\d{2})-(\d{2})";
const NAMED_DATE: &str = r"(\d{1,2})\s+(\p{L}+)\.?,?\s+(\d{4})";

struct DatePatterns {
    dotted: Regex,
    iso: Regex,
    named: Regex,
    any: Regex,
}

fn date_patterns() -> &'static DatePatterns {
    static P: OnceLock<DatePatterns> = OnceLock::new();
    P.get_or_init(|| DatePatterns {
        dotted: Regex::new(&format!("^{DOTTED_DATE}$")).unwrap(),
        iso: Regex::new(&format!("^{ISO_DATE}$")).unwrap(),
        named: Regex::new(&format!("^{NAMED_DATE}$")).unwrap(),
        any: Regex::new(&format!(r"\b(?:{DOTTED_DATE}|{ISO_DATE}|{NAMED_DATE})\b")).unwrap(),
    })
}

fn url_pattern() -> &'static Regex {
    static P: OnceLock<Regex> = OnceLock::new();
    P.get_or_init(|| Regex::new(r#"(?i)\bhttps?://[^\s<>"'()\[\]]+"#).unwrap())
}

/// Parses `DD.MM.YYYY`, `YYYY-MM-DD`, or `D <month> YYYY` (English or
/// Russian month names, any case) into a calendar date.
pub fn normalize_date(fragment: &str) -> Option<NaiveDate> {
    let s = fragment.trim();
    let p = date_patterns();
    let num = |m: &regex::Captures, i: usize| m.get(i)?.as_str().parse::<u32>().ok();
    if let Some(c) = p.dotted.captures(s) {
        return NaiveDate::from_ymd_opt(num(&c, 3)? as i32, num(&c, 2)?, num(&c, 1)?);
    }
    if let Some(c) = p.iso.captures(s) {
        return NaiveDate::from_ymd_opt(num(&c, 1)? as i32, num(&c, 2)?, num(&c, 3)?);
    }
    if let Some(c) = p.named.captures(s) {
        let month = month_number(c.get(2)?.as_str())?;
        return NaiveDate::from_ymd_opt(num(&c, 3)? as i32, month, num(&c, 1)?);
    }
    None
}

/// Lowercases scheme and host, drops default ports and a single trailing
/// slash, and keeps path and query as written. Only http(s) URLs with a
/// host are accepted.
pub fn normalize_url(fragment: &str) -> Option<String> {
    let parsed = url::Url::parse(fragment.trim()).ok()?;
    if !matches!(parsed.scheme(), "http" | "https") || parsed.host_str().is_none() {
        return None;
    }
    let mut s = parsed.to_string();
    if s.ends_with('/') {
        s.pop();
    }
    Some(s)
}

fn trim_url_tail(s: &str) -> &str {
    s.trim_end_matches(['.', ',', ';', ':', '!', '?'])
}

/// Dates and URLs mentioned anywhere in `text`, normalized.
fn precise_values(text: &str, kind: FactKind) -> Vec<String> {
    match kind {
        FactKind::PreciseDate => date_patterns()
            .any
            .find_iter(text)
            .filter_map(|m| normalize_date(m.as_str()))
            .map(|d| d.to_string())
            .collect(),
        FactKind::PreciseUrl => url_pattern()
            .find_iter(text)
            .filter_map(|m| normalize_url(trim_url_tail(m.as_str())))
            .collect(),
        FactKind::GeneralFact => Vec::new(),
    }
}

fn canonical_for(kind: FactKind, value: &str) -> Option<String> {
    match kind {
        FactKind::PreciseDate => normalize_date(value).map(|d| d.to_string()),
        FactKind::PreciseUrl => normalize_url(value),
        FactKind::GeneralFact => None,
    }
}

/// Case-insensitive occurrences of `needle` in `hay` that do not split a
/// word on either side. Both inputs are expected lowercased.
fn literal_matches<'a>(hay: &'a str, needle: &str) -> Vec<&'a str> {
    if needle.is_empty() {
        return Vec::new();
    }
    let word = |c: Option<char>| c.is_some_and(char::is_alphanumeric);
    let first_is_word = word(needle.chars().next());
    let last_is_word = word(needle.chars().next_back());
    hay.match_indices(needle)
        .filter(|(i, m)| {
            let before = hay[..*i].chars().next_back();
            let after = hay[i + m.len()..].chars().next();
            !(first_is_word && word(before)) && !(last_is_word && word(after))
        })
        .map(|(i, m)| &hay[i..i + m.len()])
        .collect()
}

/// Gold-fact matcher with compiled patterns.
pub struct FactMatcher<'a> {
    fact: &'a FactSpec,
    literals: Vec<String>,
    regexes: Vec<Regex>,
    canonical: Option<String>,
}

impl<'a> FactMatcher<'a> {
    pub fn new(fact: &'a FactSpec) -> Result<Self, EvalError> {
        let mut literals = Vec::new();
        let mut regexes = Vec::new();
        for p in &fact.patterns {
            match p {
                MatchPattern::Literal(s) => literals.push(normalize_text(s).to_lowercase()),
                MatchPattern::Regex(r) => regexes.push(
                    RegexBuilder::new(r)
                        .case_insensitive(true)
                        .build()
                        .map_err(|e| EvalError::InvalidCase { inquiry_id: String::new(), reason: e.to_string() })?,
                ),
            }
        }
        let canonical = canonical_for(fact.kind, &fact.canonical_value).or_else(|| {
            fact.kind.is_precise().then(|| fact.canonical_value.clone())
        });
        Ok(FactMatcher { fact, literals, regexes, canonical })
    }

    /// Whether the (already normalized) response states this fact.
    pub fn matches(&self, normalized_response: &str) -> bool {
        let lower = normalized_response.to_lowercase();
        let mut fragments: Vec<&str> = Vec::new();
        for lit in &self.literals {
            fragments.extend(literal_matches(&lower, lit));
        }
        for re in &self.regexes {
            fragments.extend(re.find_iter(normalized_response).map(|m| m.as_str()));
        }
        let Some(canonical) = &self.canonical else {
            return !fragments.is_empty();
        };
        fragments
            .iter()
            .filter_map(|f| canonical_for(self.fact.kind, trim_url_tail(f)))
            .chain(precise_values(normalized_response, self.fact.kind))
            .any(|v| &v == canonical)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecallCounts {
    pub recalled: usize,
    pub total: usize,
}

impl RecallCounts {
    pub fn percentage(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * self.recalled as f64 / self.total as f64
        }
    }
}

fn recall_counts(
    responses: &HashMap<String, String>,
    benchmark: &[BenchmarkCase],
    judgments: &Judgments,
    keep: impl Fn(FactKind) -> bool,
) -> Result<RecallCounts, EvalError> {
    if benchmark.is_empty() {
        return Err(EvalError::EmptyBenchmark);
    }
    let mut counts = RecallCounts::default();
    for case in benchmark {
        let response = responses.get(&case.inquiry_id).map(|r| normalize_text(r));
        for fact in case.gold_facts.iter().filter(|f| keep(f.kind)) {
            counts.total += 1;
            let key = (case.inquiry_id.clone(), fact.fact_id.clone());
            let hit = match judgments.get(&key) {
                Some(&verdict) => verdict,
                None => match &response {
                    Some(r) => FactMatcher::new(fact)?.matches(r),
                    None => false,
                },
            };
            counts.recalled += usize::from(hit);
        }
    }
    Ok(counts)
}

/// Percentage of all gold facts stated in the responses. Inquiries without
/// a response count all their facts as missed.
pub fn fact_recall(responses: &HashMap<String, String>, benchmark: &[BenchmarkCase]) -> Result<f64, EvalError> {
    fact_recall_judged(responses, benchmark, &Judgments::new())
}

pub fn fact_recall_judged(
    responses: &HashMap<String, String>,
    benchmark: &[BenchmarkCase],
    judgments: &Judgments,
) -> Result<f64, EvalError> {
    let c = recall_counts(responses, benchmark, judgments, |_| true)?;
    if c.total == 0 {
        return Err(EvalError::NoFacts);
    }
    Ok(c.percentage())
}

/// Fact recall over date and URL facts only.
pub fn precise_data_recall(responses: &HashMap<String, String>, benchmark: &[BenchmarkCase]) -> Result<f64, EvalError> {
    precise_data_recall_judged(responses, benchmark, &Judgments::new())
}

pub fn precise_data_recall_judged(
    responses: &HashMap<String, String>,
    benchmark: &[BenchmarkCase],
    judgments: &Judgments,
) -> Result<f64, EvalError> {
    let c = recall_counts(responses, benchmark, judgments, FactKind::is_precise)?;
    if c.total == 0 {
        return Err(EvalError::NoPreciseFacts);
    }
    Ok(c.percentage())
}

/// Cohen's kappa for two raters on the 0/1/2 scale.
///
/// When both raters use a single identical category the chance agreement
/// is 1 and kappa is defined as 1.
pub fn cohens_kappa(a: &[u8], b: &[u8]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(EvalError::EmptyRatings);
    }
    let mut ca = [0u64; 3];
    let mut cb = [0u64; 3];
    let mut agree = 0u64;
    for (&x, &y) in a.iter().zip(b) {
        for s in [x, y] {
            if s > 2 {
                return Err(EvalError::InvalidScore(s));
            }
        }
        ca[x as usize] += 1;
        cb[y as usize] += 1;
        agree += u64::from(x == y);
    }
    let n = a.len() as u64;
    let chance_num: u64 = ca.iter().zip(&cb).map(|(x, y)| x * y).sum();
    if chance_num == n * n {
        return Ok(1.0);
    }
    let p_o = agree as f64 / n as f64;
    let p_e = chance_num as f64 / (n * n) as f64;
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Half-up rounding to one decimal. The small bias absorbs binary
/// representation error, e.g. 0.25 * 10 landing just under 2.5.
pub fn round1(x: f64) -> f64 {
    ((x * 10.0) + 0.5 + 1e-9).floor() / 10.0
}

/// Mean survey score for one configuration, rounded to one decimal.
pub fn satisfaction_mean(entries: &[SatisfactionEntry], config: PipelineName) -> Option<f64> {
    let scores: Vec<f64> = entries
        .iter()
        .filter(|e| e.config_name == config && (1..=10).contains(&e.score))
        .map(|e| e.score as f64)
        .collect();
    if scores.is_empty() {
        return None;
    }
    Some(round1(scores.iter().sum::<f64>() / scores.len() as f64))
}

/// Counts of 0/1/2 send-worthiness scores.
pub fn rating_distribution(scores: impl IntoIterator<Item = u8>) -> [usize; 3] {
    let mut d = [0; 3];
    for s in scores {
        if let Some(slot) = d.get_mut(s as usize) {
            *slot += 1;
        }
    }
    d
}

/// Aggregated metrics for one configuration, at full precision.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfigMetrics {
    pub fact_recall_pct: f64,
    pub precise_data_recall_pct: f64,
    #[serde(default)]
    pub user_satisfaction_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub send_worthiness: Option<[usize; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub benchmark_id: String,
    pub case_count: usize,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub metadata: ReportMetadata,
    pub configs: BTreeMap<PipelineName, ConfigMetrics>,
}

/// Inputs for computing one configuration's metrics from raw material.
#[derive(Debug, Clone, Default)]
pub struct ConfigRun {
    pub responses: HashMap<String, String>,
    pub judgments: Judgments,
    pub ratings: Vec<u8>,
}

/// Computes fact metrics for a configuration. A benchmark without precise
/// facts reports 0 precise recall rather than failing the whole report.
pub fn compute_metrics(
    run: &ConfigRun,
    benchmark: &[BenchmarkCase],
    survey: &[SatisfactionEntry],
    config: PipelineName,
) -> Result<ConfigMetrics, EvalError> {
    let fact = fact_recall_judged(&run.responses, benchmark, &run.judgments)?;
    let precise = match precise_data_recall_judged(&run.responses, benchmark, &run.judgments) {
        Ok(v) => v,
        Err(EvalError::NoPreciseFacts) => 0.0,
        Err(e) => return Err(e),
    };
    Ok(ConfigMetrics {
        fact_recall_pct: fact,
        precise_data_recall_pct: precise,
        user_satisfaction_mean: satisfaction_mean(survey, config),
        send_worthiness: (!run.ratings.is_empty()).then(|| rating_distribution(run.ratings.iter().copied())),
    })
}

pub fn build_report(metadata: ReportMetadata, configs: BTreeMap<PipelineName, ConfigMetrics>) -> EvaluationReport {
    EvaluationReport { metadata, configs }
}

const HEADER: [&str; 4] = ["Model", "Fact Recall (%)", "Precise Data Recall (%)", "User Satisfaction (1-10)"];
const ABSENT: &str = "—";

impl EvaluationReport {
    fn rows(&self) -> Vec<[String; 4]> {
        PipelineName::ALL
            .iter()
            .filter_map(|name| {
                let m = self.configs.get(name)?;
                Some([
                    name.label().to_string(),
                    format!("{:.1}", round1(m.fact_recall_pct)),
                    format!("{:.1}", round1(m.precise_data_recall_pct)),
                    m.user_satisfaction_mean
                        .map(|s| format!("{:.1}", round1(s)))
                        .unwrap_or_else(|| ABSENT.to_string()),
                ])
            })
            .collect()
    }

    /// One row per configuration in fixed order, fields joined by `", "`.
    pub fn to_csv(&self) -> String {
        let mut out = HEADER.join(", ");
        out.push('\n');
        for row in self.rows() {
            out.push_str(&row.join(", "));
            out.push('\n');
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "## Performance Comparison of Response Generation Models\n");
        let _ = writeln!(
            out,
            "Benchmark `{}`, {} cases, generated {}.\n",
            self.metadata.benchmark_id,
            self.metadata.case_count,
            self.metadata.timestamp.format("%Y-%m-%d %H:%M UTC")
        );
        let _ = writeln!(out, "| {} |", HEADER.join(" | "));
        let _ = writeln!(out, "|:---|---:|---:|---:|");
        for row in self.rows() {
            let _ = writeln!(out, "| {} |", row.join(" | "));
        }
        let rated: Vec<_> = PipelineName::ALL
            .iter()
            .filter_map(|n| Some((n, self.configs.get(n)?.send_worthiness?)))
            .collect();
        if !rated.is_empty() {
            let _ = writeln!(out, "\n### Staff send-worthiness ratings\n");
            let _ = writeln!(out, "| Model | 0 (would not send) | 1 (send with edits) | 2 (send as is) |");
            let _ = writeln!(out, "|:---|---:|---:|---:|");
            for (name, d) in rated {
                let _ = writeln!(out, "| {} | {} | {} | {} |", name.label(), d[0], d[1], d[2]);
            }
        }
        out
    }
}
