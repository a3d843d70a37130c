//! Embedding providers: the deterministic feature-hashing reference
//! embedder and an HTTP client for a remote embedding service.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::chunking::tokenize;
use crate::retry::{retry, RetryPolicy};

pub const REFERENCE_DIM: usize = 256;
const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("embedding transport error: {0}")]
    Transport(String),
    #[error("embedding endpoint rejected the request: {0}")]
    Rejected(String),
    #[error("embedding provider returned {got} vectors for {expected} texts")]
    CountMismatch { expected: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("embedding contains non-finite values")]
    NonFinite,
    #[error("embedding provider gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
}

impl EmbedError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, EmbedError::Transport(_))
    }
}

/// A unit-length vector, or the all-zero vector produced for empty text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    /// L2-normalizes `values`. All-zero input stays zero.
    pub fn normalized(mut values: Vec<f32>) -> Result<Self, EmbedError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        let norm = values.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut values {
                *v = ((*v as f64) / norm) as f32;
            }
        }
        Ok(EmbeddingVector(values))
    }

    /// Wraps values that are already unit-length (or zero).
    pub fn from_unit(values: Vec<f32>) -> Result<Self, EmbedError> {
        let v = EmbeddingVector(values);
        if v.0.iter().any(|x| !x.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        let n = v.norm();
        if n != 0.0 && (n - 1.0).abs() > NORM_TOLERANCE {
            return EmbeddingVector::normalized(v.0);
        }
        Ok(v)
    }

    pub fn zeros(dim: usize) -> Self {
        EmbeddingVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }
}

pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;

    /// One vector per input text, in order.
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError>;

    fn embed_one(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut out = self.embed(&[text.to_string()])?;
        out.pop().ok_or(EmbedError::CountMismatch { expected: 1, got: 0 })
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8], seed: u64) -> u64 {
    let mut hash = FNV_OFFSET ^ seed;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

const BUCKET_SEED: u64 = 0;
const SIGN_SEED: u64 = 0x9e37_79b9_7f4a_7c15;

/// Hashed bag-of-tokens embedder.
///
/// Each lowercased token from the reference tokenizer adds its term count,
/// with a sign taken from a second hash, to one of `dim` buckets; the
/// result is L2-normalized.
#[derive(Debug, Clone)]
pub struct ReferenceEmbedder {
    dim: usize,
}

impl Default for ReferenceEmbedder {
    fn default() -> Self {
        ReferenceEmbedder { dim: REFERENCE_DIM }
    }
}

impl ReferenceEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        ReferenceEmbedder { dim }
    }

    pub fn embed_text(&self, text: &str) -> EmbeddingVector {
        let mut acc = vec![0f64; self.dim];
        for token in tokenize(text) {
            let key = token.text.to_lowercase();
            let bucket = (fnv1a(key.as_bytes(), BUCKET_SEED) % self.dim as u64) as usize;
            let sign = if fnv1a(key.as_bytes(), SIGN_SEED) & 1 == 0 { 1.0 } else { -1.0 };
            acc[bucket] += sign;
        }
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return EmbeddingVector::zeros(self.dim);
        }
        EmbeddingVector(acc.into_iter().map(|v| (v / norm) as f32).collect())
    }
}

impl EmbeddingProvider for ReferenceEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        Ok(texts.iter().map(|t| self.embed_text(t)).collect())
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

/// Client for a service speaking `{"texts": [...]}` → `{"vectors": [[...]]}`.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    endpoint: String,
    api_key: Option<String>,
    dim: usize,
    agent: ureq::Agent,
    retry: RetryPolicy,
}

impl RemoteEmbedder {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, dim: usize) -> Self {
        RemoteEmbedder {
            endpoint: endpoint.into(),
            api_key,
            dim,
            agent: ureq::AgentBuilder::new().timeout(Duration::from_secs(30)).build(),
            retry: RetryPolicy::default(),
        }
    }

    /// Reads `EMBED_ENDPOINT` and `EMBED_API_KEY`.
    pub fn from_env(dim: usize) -> Option<Self> {
        let endpoint = std::env::var("EMBED_ENDPOINT").ok()?;
        Some(Self::new(endpoint, std::env::var("EMBED_API_KEY").ok(), dim))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn call(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let resp = match req.send_json(EmbedRequest { texts }) {
            Ok(r) => r,
            Err(ureq::Error::Status(code, r)) if code == 429 || code >= 500 => {
                return Err(EmbedError::Transport(format!("HTTP {code} {}", r.status_text())))
            }
            Err(ureq::Error::Status(code, r)) => {
                return Err(EmbedError::Rejected(format!("HTTP {code} {}", r.status_text())))
            }
            Err(e) => return Err(EmbedError::Transport(e.to_string())),
        };
        let resp: EmbedResponse = resp
            .into_json()
            .map_err(|e| EmbedError::Rejected(format!("unreadable response body: {e}")))?;
        if resp.vectors.len() != texts.len() {
            return Err(EmbedError::CountMismatch {
                expected: texts.len(),
                got: resp.vectors.len(),
            });
        }
        resp.vectors
            .into_iter()
            .map(|v| {
                if v.len() != self.dim {
                    return Err(EmbedError::DimMismatch { expected: self.dim, got: v.len() });
                }
                EmbeddingVector::from_unit(v)
            })
            .collect()
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        retry(&self.retry, EmbedError::is_retryable, || self.call(texts)).map_err(|failure| match failure.error {
            e if e.is_retryable() => EmbedError::Exhausted {
                attempts: failure.attempts,
                last: e.to_string(),
            },
            e => e,
        })
    }
}
