//! Query-time retrieval over an immutable snapshot of the knowledge base,
//! and the publish/swap handle used for background rebuilds.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use crate::chunking::{chunk_document, Chunk, ChunkId, ChunkingError, ChunkingParams};
use crate::corpus::KnowledgeBase;
use crate::embedding::{EmbedError, EmbeddingProvider};
use crate::index::{IndexError, RetrievalHit, SearchOptions, VectorIndex};

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Chunking(#[from] ChunkingError),
    #[error("index has dimension {index}, provider has {provider}")]
    ProviderDim { index: usize, provider: usize },
    #[error("index references chunk {0} that the knowledge base does not produce")]
    MissingChunk(ChunkId),
}

/// A hit together with the chunk text it points at.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredChunk {
    pub hit: RetrievalHit,
    pub chunk: Chunk,
}

/// A vector index plus the chunk texts it was built from. Never mutated
/// once built, so citations taken from it stay valid.
#[derive(Debug, Clone)]
pub struct RetrievalSnapshot {
    index: VectorIndex,
    chunks: HashMap<ChunkId, Chunk>,
    params: ChunkingParams,
}

impl RetrievalSnapshot {
    pub fn empty(dim: usize) -> Self {
        RetrievalSnapshot {
            index: VectorIndex::empty(dim, 0),
            chunks: HashMap::new(),
            params: ChunkingParams::default(),
        }
    }

    /// Pairs a persisted index with chunk texts recomputed from `kb`.
    pub fn from_parts(index: VectorIndex, kb: &KnowledgeBase, params: ChunkingParams) -> Result<Self, RetrievalError> {
        let mut chunks = HashMap::new();
        for doc in kb.documents() {
            for c in chunk_document(doc, &params)? {
                chunks.insert(c.chunk_id.clone(), c);
            }
        }
        if let Some((missing, _)) = index.entries().iter().find(|(id, _)| !chunks.contains_key(id)) {
            return Err(RetrievalError::MissingChunk(missing.clone()));
        }
        chunks.retain(|id, _| index.contains(id));
        Ok(RetrievalSnapshot { index, chunks, params })
    }

    pub fn index(&self) -> &VectorIndex {
        &self.index
    }

    pub fn watermark(&self) -> u64 {
        self.index.watermark()
    }

    pub fn params(&self) -> ChunkingParams {
        self.params
    }

    pub fn chunk(&self, id: &ChunkId) -> Option<&Chunk> {
        self.chunks.get(id)
    }

    pub fn retrieve(
        &self,
        provider: &dyn EmbeddingProvider,
        query: &str,
        opts: SearchOptions,
    ) -> Result<Vec<ScoredChunk>, RetrievalError> {
        if provider.dim() != self.index.dim() {
            return Err(RetrievalError::ProviderDim { index: self.index.dim(), provider: provider.dim() });
        }
        let q = provider.embed_one(query)?;
        let hits = self.index.search_with(&q, opts)?;
        Ok(hits
            .into_iter()
            .map(|hit| {
                let chunk = self.chunks[&hit.chunk_id].clone();
                ScoredChunk { hit, chunk }
            })
            .collect())
    }
}

/// Chunks every document, embeds every chunk, and returns a fresh snapshot
/// whose watermark is the KB revision it was built from.
pub fn rebuild_index(
    kb: &KnowledgeBase,
    params: &ChunkingParams,
    provider: &dyn EmbeddingProvider,
) -> Result<RetrievalSnapshot, RetrievalError> {
    const EMBED_BATCH: usize = 64;
    params.validate()?;
    let mut chunks = Vec::new();
    for doc in kb.documents() {
        chunks.extend(chunk_document(doc, params)?);
    }
    let mut entries = Vec::with_capacity(chunks.len());
    for batch in chunks.chunks(EMBED_BATCH) {
        let texts: Vec<String> = batch.iter().map(|c| c.text.clone()).collect();
        let vectors = provider.embed(&texts)?;
        if vectors.len() != texts.len() {
            return Err(EmbedError::CountMismatch { expected: texts.len(), got: vectors.len() }.into());
        }
        entries.extend(batch.iter().map(|c| c.chunk_id.clone()).zip(vectors));
    }
    let index = VectorIndex::new(provider.dim(), entries, kb.kb_revision())?;
    Ok(RetrievalSnapshot {
        index,
        chunks: chunks.into_iter().map(|c| (c.chunk_id.clone(), c)).collect(),
        params: *params,
    })
}

/// Holds the currently published snapshot. Readers clone the `Arc` and
/// keep using it for the whole query; `publish` swaps it atomically.
#[derive(Debug, Clone)]
pub struct IndexHandle {
    current: Arc<RwLock<Arc<RetrievalSnapshot>>>,
}

impl IndexHandle {
    pub fn new(snapshot: RetrievalSnapshot) -> Self {
        IndexHandle { current: Arc::new(RwLock::new(Arc::new(snapshot))) }
    }

    pub fn snapshot(&self) -> Arc<RetrievalSnapshot> {
        self.current.read().expect("index lock poisoned").clone()
    }

    pub fn publish(&self, snapshot: RetrievalSnapshot) {
        *self.current.write().expect("index lock poisoned") = Arc::new(snapshot);
    }

    pub fn watermark(&self) -> u64 {
        self.snapshot().watermark()
    }
}
