//! Knowledge-base ingestion: text cleaning, rule-driven redaction, and the
//! document store with its JSON-Lines persistence.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::mpsc::{channel, Receiver, Sender};

use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

pub const KB_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("invalid UTF-8 at byte offset {offset}")]
    InvalidUtf8 { offset: usize },
    #[error("document id is empty")]
    EmptyDocId,
    #[error("document `{0}` has no text after cleaning")]
    EmptyText(String),
    #[error("unknown document `{0}`")]
    UnknownDocument(String),
    #[error("redaction rule `{rule_id}`: {reason}")]
    InvalidRule { rule_id: String, reason: String },
    #[error("unknown source kind `{0}`")]
    UnknownSourceKind(String),
    #[error("knowledge base file {path}: line {line}: {reason}")]
    Format { path: PathBuf, line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Regulation,
    Webpage,
    Faq,
    QaHistory,
}

impl SourceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::Regulation => "regulation",
            SourceKind::Webpage => "webpage",
            SourceKind::Faq => "faq",
            SourceKind::QaHistory => "qa_history",
        }
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceKind {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "regulation" => Ok(SourceKind::Regulation),
            "webpage" => Ok(SourceKind::Webpage),
            "faq" => Ok(SourceKind::Faq),
            "qa_history" => Ok(SourceKind::QaHistory),
            other => Err(CorpusError::UnknownSourceKind(other.to_string())),
        }
    }
}

/// A cleaned knowledge-base source.
///
/// `metadata` may carry `url`, `effective_date`, and an optional
/// `verified = "true"` flag recording staff fact-checking. The flag is
/// informational and never gates ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub source_kind: SourceKind,
    pub title: String,
    pub text: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    #[serde(default)]
    pub revision: u64,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, source_kind: SourceKind, title: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            doc_id: doc_id.into(),
            source_kind,
            title: title.into(),
            text: text.into(),
            metadata: BTreeMap::new(),
            revision: 0,
        }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.insert(key.into(), value.into());
        self
    }

    pub fn is_verified(&self) -> bool {
        self.metadata.get("verified").map(|v| v == "true").unwrap_or(false)
    }
}

/// Validates raw bytes as UTF-8 and normalizes them.
pub fn normalize_bytes(raw: &[u8]) -> Result<String, CorpusError> {
    match std::str::from_utf8(raw) {
        Ok(s) => Ok(normalize_text(s)),
        Err(e) => Err(CorpusError::InvalidUtf8 { offset: e.valid_up_to() }),
    }
}

/// Canonical text cleaning: NFC, LF line endings, tabs and space runs
/// collapsed to one space, at most one blank line in a row, no control
/// characters besides newline, trimmed.
///
/// Spaces adjacent to a newline are dropped so that lines never carry
/// trailing or leading blanks; that keeps the function idempotent.
pub fn normalize_text(raw: &str) -> String {
    let mut lines: Vec<String> = Vec::new();
    let mut current = String::new();
    let mut chars = raw.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '\r' => {
                if chars.peek() == Some(&'\n') {
                    chars.next();
                }
                lines.push(std::mem::take(&mut current));
            }
            '\n' => lines.push(std::mem::take(&mut current)),
            c if c == '\t' || c == ' ' || (c.is_whitespace() && !c.is_control()) => {
                if !current.is_empty() && !current.ends_with(' ') {
                    current.push(' ');
                }
            }
            c if c.is_control() => {}
            c => current.push(c),
        }
    }
    lines.push(current);

    let mut out = String::with_capacity(raw.len());
    let mut blank_run = 0usize;
    for line in lines.iter().map(|l| l.trim_matches(' ')) {
        if line.is_empty() {
            blank_run += 1;
            continue;
        }
        if !out.is_empty() {
            out.push_str(if blank_run > 0 { "\n\n" } else { "\n" });
        }
        blank_run = 0;
        out.push_str(line);
    }
    // Composition runs last: dropping a control character can bring a base
    // letter next to a combining mark.
    out.nfc().collect()
}

/// Serialized form of a redaction rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedactionRuleSpec {
    pub rule_id: String,
    pub pattern: String,
    pub replacement: String,
}

/// A compiled redaction rule. The `regex` crate guarantees linear-time
/// matching and rejects backreferences at compile time.
#[derive(Debug, Clone)]
pub struct RedactionRule {
    pub rule_id: String,
    pattern: Regex,
    pub replacement: String,
}

impl RedactionRule {
    pub fn new(rule_id: impl Into<String>, pattern: &str, replacement: impl Into<String>) -> Result<Self, CorpusError> {
        let rule_id = rule_id.into();
        let replacement = replacement.into();
        let pattern = Regex::new(pattern).map_err(|e| CorpusError::InvalidRule {
            rule_id: rule_id.clone(),
            reason: e.to_string(),
        })?;
        if !is_bracketed_tag(&replacement) {
            return Err(CorpusError::InvalidRule {
                rule_id,
                reason: format!("replacement `{replacement}` must be a bracketed uppercase tag like [EMAIL]"),
            });
        }
        Ok(RedactionRule { rule_id, pattern, replacement })
    }

    pub fn from_spec(spec: &RedactionRuleSpec) -> Result<Self, CorpusError> {
        Self::new(spec.rule_id.clone(), &spec.pattern, spec.replacement.clone())
    }

    pub fn pattern(&self) -> &Regex {
        &self.pattern
    }

    pub fn email() -> Self {
        Self::new("email", r"[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}", "[EMAIL]").expect("builtin rule")
    }

    /// International-style phone numbers, e.g. `+7 999 123-45-67`.
    pub fn phone() -> Self {
        Self::new("phone", r"\+\d{1,3}(?:[ -]?\(?\d{2,4}\)?)(?:[ -]?\d{2,4}){2,4}", "[PHONE]").expect("builtin rule")
    }

    /// Russian SNILS insurance numbers.
    pub fn snils() -> Self {
        Self::new("snils", r"\b\d{3}-\d{3}-\d{3} \d{2}\b", "[SNILS]").expect("builtin rule")
    }
}

fn is_bracketed_tag(s: &str) -> bool {
    s.len() >= 3
        && s.starts_with('[')
        && s.ends_with(']')
        && s[1..s.len() - 1].chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}

/// The built-in rule set used when no rules file is configured.
pub fn default_rules() -> Vec<RedactionRule> {
    vec![RedactionRule::email(), RedactionRule::phone(), RedactionRule::snils()]
}

/// Loads rules from a TOML file of `[[rule]]` tables.
pub fn load_rules(path: &Path) -> Result<Vec<RedactionRule>, CorpusError> {
    #[derive(Deserialize)]
    struct RulesFile {
        #[serde(default)]
        rule: Vec<RedactionRuleSpec>,
    }
    let raw = std::fs::read_to_string(path)?;
    let parsed: RulesFile = toml::from_str(&raw).map_err(|e| CorpusError::Format {
        path: path.to_path_buf(),
        line: e.span().map(|s| raw[..s.start].lines().count()).unwrap_or(0),
        reason: e.message().to_string(),
    })?;
    parsed.rule.iter().map(RedactionRule::from_spec).collect()
}

/// Applies each rule globally, in list order. Returns the redacted text and
/// the total number of replacements made.
pub fn redact(text: &str, rules: &[RedactionRule]) -> (String, usize) {
    let mut out = text.to_string();
    let mut count = 0;
    for rule in rules {
        let hits = rule.pattern.find_iter(&out).count();
        if hits > 0 {
            count += hits;
            out = rule.pattern.replace_all(&out, regex::NoExpand(&rule.replacement)).into_owned();
        }
    }
    (out, count)
}

/// Normalizes, redacts, and re-normalizes a document's title and text.
/// Returns the number of redactions applied.
pub fn clean_document(doc: &mut Document, rules: &[RedactionRule]) -> usize {
    let (text, n_text) = redact(&normalize_text(&doc.text), rules);
    let (title, n_title) = redact(&normalize_text(&doc.title), rules);
    doc.text = normalize_text(&text);
    doc.title = normalize_text(&title);
    n_text + n_title
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KbEvent {
    Upserted { doc_id: String, revision: u64, kb_revision: u64 },
    Removed { doc_id: String, kb_revision: u64 },
}

impl KbEvent {
    pub fn kb_revision(&self) -> u64 {
        match self {
            KbEvent::Upserted { kb_revision, .. } | KbEvent::Removed { kb_revision, .. } => *kb_revision,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct KbHeader {
    format_version: u32,
    kb_id: String,
    /// KB revision at the time the file was last compacted.
    #[serde(default)]
    base_revision: u64,
    /// Number of document lines written by that compaction.
    #[serde(default)]
    base_count: usize,
}

/// The document store.
///
/// `kb_revision` counts every committed mutation and is the value a vector
/// index records as its watermark. When opened from a file, upserts are
/// appended to it and removals rewrite it.
#[derive(Debug)]
pub struct KnowledgeBase {
    kb_id: String,
    docs: BTreeMap<String, Document>,
    /// Last revision per doc id, kept after removal so re-adding continues the count.
    revisions: BTreeMap<String, u64>,
    kb_revision: u64,
    path: Option<PathBuf>,
    subscribers: Vec<Sender<KbEvent>>,
}

impl Clone for KnowledgeBase {
    /// Clones the document set only; the clone is detached from any file
    /// and has no subscribers.
    fn clone(&self) -> Self {
        KnowledgeBase {
            kb_id: self.kb_id.clone(),
            docs: self.docs.clone(),
            revisions: self.revisions.clone(),
            kb_revision: self.kb_revision,
            path: None,
            subscribers: Vec::new(),
        }
    }
}

impl KnowledgeBase {
    pub fn new(kb_id: impl Into<String>) -> Self {
        KnowledgeBase {
            kb_id: kb_id.into(),
            docs: BTreeMap::new(),
            revisions: BTreeMap::new(),
            kb_revision: 0,
            path: None,
            subscribers: Vec::new(),
        }
    }

    /// Opens a KB file, creating it with a fresh header if missing. The
    /// returned store appends subsequent upserts to the file.
    pub fn open(path: impl AsRef<Path>, kb_id: &str) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let mut kb = if path.exists() { Self::load(path)? } else { Self::new(kb_id) };
        kb.path = Some(path.to_path_buf());
        if !path.exists() {
            kb.save(path)?;
        }
        Ok(kb)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let format_err = |line: usize, reason: String| CorpusError::Format {
            path: path.to_path_buf(),
            line,
            reason,
        };
        let reader = BufReader::new(File::open(path)?);
        let mut lines = reader.lines().enumerate();
        let header: KbHeader = match lines.next() {
            Some((_, line)) => serde_json::from_str(&line?).map_err(|e| format_err(1, format!("bad header: {e}")))?,
            None => return Err(format_err(1, "missing header".into())),
        };
        if header.format_version != KB_FORMAT_VERSION {
            return Err(format_err(1, format!("unsupported format_version {}", header.format_version)));
        }
        let mut kb = KnowledgeBase::new(header.kb_id);
        let mut doc_lines = 0usize;
        for (idx, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let doc: Document = serde_json::from_str(&line).map_err(|e| format_err(idx + 1, e.to_string()))?;
            doc_lines += 1;
            kb.revisions.insert(doc.doc_id.clone(), doc.revision);
            kb.docs.insert(doc.doc_id.clone(), doc);
        }
        kb.kb_revision = header.base_revision + doc_lines.saturating_sub(header.base_count) as u64;
        Ok(kb)
    }

    /// Writes a compacted file: header plus the current revision of each document.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let path = path.as_ref();
        let tmp = path.with_extension("jsonl.tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            let header = KbHeader {
                format_version: KB_FORMAT_VERSION,
                kb_id: self.kb_id.clone(),
                base_revision: self.kb_revision,
                base_count: self.docs.len(),
            };
            serde_json::to_writer(&mut w, &header).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
            for doc in self.docs.values() {
                serde_json::to_writer(&mut w, doc).map_err(std::io::Error::from)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
            w.get_ref().sync_all()?;
        }
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn kb_id(&self) -> &str {
        &self.kb_id
    }

    pub fn kb_revision(&self) -> u64 {
        self.kb_revision
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.docs.get(doc_id)
    }

    /// Documents in ascending `doc_id` order.
    pub fn documents(&self) -> impl Iterator<Item = &Document> {
        self.docs.values()
    }

    /// Registers a listener for change events.
    pub fn subscribe(&mut self) -> Receiver<KbEvent> {
        let (tx, rx) = channel();
        self.subscribers.push(tx);
        rx
    }

    fn emit(&mut self, event: KbEvent) {
        self.subscribers.retain(|tx| tx.send(event.clone()).is_ok());
    }

    /// Cleans and stores `doc`, returning its new revision.
    pub fn upsert(&mut self, mut doc: Document, rules: &[RedactionRule]) -> Result<u64, CorpusError> {
        if doc.doc_id.trim().is_empty() {
            return Err(CorpusError::EmptyDocId);
        }
        clean_document(&mut doc, rules);
        if doc.text.is_empty() {
            return Err(CorpusError::EmptyText(doc.doc_id));
        }
        let revision = self.revisions.get(&doc.doc_id).copied().unwrap_or(0) + 1;
        doc.revision = revision;
        if let Some(path) = &self.path {
            let mut f = OpenOptions::new().append(true).open(path)?;
            let mut line = serde_json::to_vec(&doc).map_err(std::io::Error::from)?;
            line.push(b'\n');
            f.write_all(&line)?;
            f.sync_data()?;
        }
        self.kb_revision += 1;
        self.revisions.insert(doc.doc_id.clone(), revision);
        let doc_id = doc.doc_id.clone();
        self.docs.insert(doc_id.clone(), doc);
        let kb_revision = self.kb_revision;
        self.emit(KbEvent::Upserted { doc_id, revision, kb_revision });
        Ok(revision)
    }

    pub fn remove(&mut self, doc_id: &str) -> Result<Document, CorpusError> {
        let doc = self
            .docs
            .remove(doc_id)
            .ok_or_else(|| CorpusError::UnknownDocument(doc_id.to_string()))?;
        self.kb_revision += 1;
        if let Some(path) = self.path.clone() {
            self.save(path)?;
        }
        let kb_revision = self.kb_revision;
        self.emit(KbEvent::Removed { doc_id: doc_id.to_string(), kb_revision });
        Ok(doc)
    }
}
