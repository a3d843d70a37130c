//! Tokenization and sliding-window segmentation of documents.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::Document;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub byte_start: usize,
    pub byte_end: usize,
}

/// Splits text into ordered, non-overlapping tokens that together cover
/// every non-whitespace character of the input.
pub trait Tokenizer: Send + Sync {
    fn tokenize(&self, text: &str) -> Vec<Token>;

    /// Byte spans of the tokens, for callers that do not need the text.
    fn spans(&self, text: &str) -> Vec<(usize, usize)> {
        self.tokenize(text).into_iter().map(|t| (t.byte_start, t.byte_end)).collect()
    }
}

/// Reference tokenizer: each maximal run of letters and digits is one
/// token, every other non-whitespace character is a token on its own, and
/// whitespace is skipped.
#[derive(Debug, Clone, Copy, Default)]
pub struct WordTokenizer;

impl Tokenizer for WordTokenizer {
    fn tokenize(&self, text: &str) -> Vec<Token> {
        tokenize(text)
    }

    fn spans(&self, text: &str) -> Vec<(usize, usize)> {
        token_spans(text)
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

pub fn tokenize(text: &str) -> Vec<Token> {
    token_spans(text)
        .into_iter()
        .map(|(start, end)| Token { text: text[start..end].to_string(), byte_start: start, byte_end: end })
        .collect()
}

fn token_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut run_start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if is_word_char(c) {
            run_start.get_or_insert(i);
            continue;
        }
        if let Some(start) = run_start.take() {
            spans.push((start, i));
        }
        if !c.is_whitespace() {
            spans.push((i, i + c.len_utf8()));
        }
    }
    if let Some(start) = run_start {
        spans.push((start, text.len()));
    }
    spans
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ChunkingError {
    #[error("chunk_size must be at least 1")]
    ZeroChunkSize,
    #[error("overlap {overlap} must be smaller than chunk_size {chunk_size}")]
    OverlapTooLarge { chunk_size: usize, overlap: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkingParams {
    pub chunk_size: usize,
    pub overlap: usize,
}

impl Default for ChunkingParams {
    fn default() -> Self {
        ChunkingParams { chunk_size: 512, overlap: 64 }
    }
}

impl ChunkingParams {
    pub fn new(chunk_size: usize, overlap: usize) -> Result<Self, ChunkingError> {
        let params = ChunkingParams { chunk_size, overlap };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), ChunkingError> {
        if self.chunk_size == 0 {
            return Err(ChunkingError::ZeroChunkSize);
        }
        if self.overlap >= self.chunk_size {
            return Err(ChunkingError::OverlapTooLarge {
                chunk_size: self.chunk_size,
                overlap: self.overlap,
            });
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.chunk_size - self.overlap
    }

    /// Number of windows for a document of `n_tokens`.
    pub fn chunk_count(&self, n_tokens: usize) -> usize {
        match n_tokens {
            0 => 0,
            n if n <= self.chunk_size => 1,
            n => 1 + (n - self.chunk_size).div_ceil(self.stride()),
        }
    }

    /// Token windows `[start, end)` covering `0..n_tokens`. Windows start
    /// every `stride` tokens until one reaches the end; the last may be short.
    pub fn spans(&self, n_tokens: usize) -> Vec<(usize, usize)> {
        let mut spans = Vec::with_capacity(self.chunk_count(n_tokens));
        let mut start = 0;
        while start < n_tokens {
            let end = (start + self.chunk_size).min(n_tokens);
            spans.push((start, end));
            if end == n_tokens {
                break;
            }
            start += self.stride();
        }
        spans
    }
}

/// `(doc_id, ordinal)`, ordered by doc id then ordinal. Rendered as
/// `doc_id#ordinal`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChunkId {
    pub doc_id: String,
    pub ordinal: u32,
}

impl ChunkId {
    pub fn new(doc_id: impl Into<String>, ordinal: u32) -> Self {
        ChunkId { doc_id: doc_id.into(), ordinal }
    }

    /// Parses `doc_id#ordinal`, splitting at the last `#`.
    pub fn parse(s: &str) -> Option<Self> {
        let (doc, ord) = s.rsplit_once('#')?;
        if doc.is_empty() {
            return None;
        }
        Some(ChunkId::new(doc, ord.parse().ok()?))
    }
}

impl Ord for ChunkId {
    fn cmp(&self, other: &Self) -> Ordering {
        self.doc_id.cmp(&other.doc_id).then(self.ordinal.cmp(&other.ordinal))
    }
}

impl PartialOrd for ChunkId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for ChunkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.doc_id, self.ordinal)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: ChunkId,
    pub start_token: usize,
    pub end_token: usize,
    /// Source bytes from the first token's start to the last token's end.
    pub text: String,
    pub doc_revision: u64,
}

impl Chunk {
    pub fn token_len(&self) -> usize {
        self.end_token - self.start_token
    }
}

pub fn chunk_document(doc: &Document, params: &ChunkingParams) -> Result<Vec<Chunk>, ChunkingError> {
    chunk_document_with(doc, params, &WordTokenizer)
}

pub fn chunk_document_with(
    doc: &Document,
    params: &ChunkingParams,
    tokenizer: &dyn Tokenizer,
) -> Result<Vec<Chunk>, ChunkingError> {
    params.validate()?;
    let tokens = tokenizer.spans(&doc.text);
    Ok(params
        .spans(tokens.len())
        .into_iter()
        .enumerate()
        .map(|(ordinal, (start, end))| Chunk {
            chunk_id: ChunkId::new(doc.doc_id.clone(), ordinal as u32),
            start_token: start,
            end_token: end,
            text: doc.text[tokens[start].0..tokens[end - 1].1].to_string(),
            doc_revision: doc.revision,
        })
        .collect())
}
