//! Exact cosine top-k index over chunk embeddings, with a versioned
//! little-endian binary file format.
//!
//! File layout:
//!
//! ```text
//! magic        4 bytes  b"ARIX"
//! version      u32
//! dim          u32
//! count        u64
//! watermark    u64
//! count × { id_len u32, id UTF-8 bytes ("doc_id#ordinal"), dim × f32 }
//! ```

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chunking::ChunkId;
use crate::embedding::EmbeddingVector;

pub const INDEX_MAGIC: [u8; 4] = *b"ARIX";
pub const INDEX_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_TOP_K: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("duplicate chunk id {0}")]
    DuplicateChunk(ChunkId),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("malformed index file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, IndexError> {
    if a.dim() != b.dim() {
        return Err(IndexError::DimMismatch { expected: a.dim(), got: b.dim() });
    }
    Ok(cosine_unchecked(a.values(), b.values()))
}

fn cosine_unchecked(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0f64, 0f64, 0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub chunk_id: ChunkId,
    pub score: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchOptions {
    pub k: usize,
    /// Cap on hits from one document; `None` keeps all.
    pub max_per_doc: Option<usize>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { k: DEFAULT_TOP_K, max_per_doc: None }
    }
}

impl SearchOptions {
    pub fn top(k: usize) -> Self {
        SearchOptions { k, max_per_doc: None }
    }
}

/// Heap entry ordered so that the *worst* candidate is the max.
struct Candidate<'a> {
    score: f64,
    id: &'a ChunkId,
}

impl Candidate<'_> {
    /// Better-first ordering: higher score, then smaller chunk id.
    fn rank_cmp(&self, other: &Self) -> Ordering {
        other.score.total_cmp(&self.score).then_with(|| self.id.cmp(other.id))
    }
}

impl PartialEq for Candidate<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.rank_cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate<'_> {}
impl PartialOrd for Candidate<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank_cmp(other)
    }
}

/// Immutable flat index. `watermark` is the knowledge-base revision the
/// entries were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dim: usize,
    entries: Vec<(ChunkId, EmbeddingVector)>,
    watermark: u64,
}

impl VectorIndex {
    pub fn new(dim: usize, entries: Vec<(ChunkId, EmbeddingVector)>, watermark: u64) -> Result<Self, IndexError> {
        let mut seen = HashSet::with_capacity(entries.len());
        for (id, v) in &entries {
            if v.dim() != dim {
                return Err(IndexError::DimMismatch { expected: dim, got: v.dim() });
            }
            if !seen.insert(id) {
                return Err(IndexError::DuplicateChunk(id.clone()));
            }
        }
        Ok(VectorIndex { dim, entries, watermark })
    }

    pub fn empty(dim: usize, watermark: u64) -> Self {
        VectorIndex { dim, entries: Vec::new(), watermark }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn watermark(&self) -> u64 {
        self.watermark
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(ChunkId, EmbeddingVector)] {
        &self.entries
    }

    pub fn contains(&self, id: &ChunkId) -> bool {
        self.entries.iter().any(|(c, _)| c == id)
    }

    /// Exact top-k by cosine, ties broken by ascending chunk id.
    pub fn search(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<RetrievalHit>, IndexError> {
        self.search_with(query, SearchOptions::top(k))
    }

    pub fn search_with(&self, query: &EmbeddingVector, opts: SearchOptions) -> Result<Vec<RetrievalHit>, IndexError> {
        if opts.k == 0 {
            return Err(IndexError::ZeroK);
        }
        if query.dim() != self.dim {
            return Err(IndexError::DimMismatch { expected: self.dim, got: query.dim() });
        }
        let scored = self
            .entries
            .iter()
            .map(|(id, v)| Candidate { score: cosine_unchecked(query.values(), v.values()), id });

        let best: Vec<Candidate<'_>> = match opts.max_per_doc {
            None => {
                let mut heap = BinaryHeap::with_capacity(opts.k + 1);
                for c in scored {
                    if heap.len() < opts.k {
                        heap.push(c);
                    } else if heap.peek().is_some_and(|worst| c < *worst) {
                        heap.pop();
                        heap.push(c);
                    }
                }
                heap.into_sorted_vec()
            }
            Some(cap) => {
                let mut all: Vec<_> = scored.collect();
                all.sort();
                let mut per_doc: HashMap<&str, usize> = HashMap::new();
                all.into_iter()
                    .filter(|c| {
                        let n = per_doc.entry(c.id.doc_id.as_str()).or_default();
                        *n += 1;
                        *n <= cap
                    })
                    .take(opts.k)
                    .collect()
            }
        };
        Ok(best
            .into_iter()
            .enumerate()
            .map(|(i, c)| RetrievalHit { chunk_id: c.id.clone(), score: c.score, rank: i + 1 })
            .collect())
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), IndexError> {
        w.write_all(&INDEX_MAGIC)?;
        w.write_all(&INDEX_FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.entries.len() as u64).to_le_bytes())?;
        w.write_all(&self.watermark.to_le_bytes())?;
        for (id, v) in &self.entries {
            let id = id.to_string();
            w.write_all(&(id.len() as u32).to_le_bytes())?;
            w.write_all(id.as_bytes())?;
            for x in v.values() {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, IndexError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != INDEX_MAGIC {
            return Err(IndexError::Malformed("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != INDEX_FORMAT_VERSION {
            return Err(IndexError::Malformed(format!("unsupported version {version}")));
        }
        let dim = read_u32(&mut r)? as usize;
        let count = read_u64(&mut r)?;
        let watermark = read_u64(&mut r)?;
        let mut entries = Vec::with_capacity(count.min(1 << 20) as usize);
        let mut buf = vec![0u8; dim * 4];
        for _ in 0..count {
            let len = read_u32(&mut r)? as usize;
            let mut id = vec![0u8; len];
            r.read_exact(&mut id)?;
            let id = String::from_utf8(id).map_err(|_| IndexError::Malformed("chunk id is not UTF-8".into()))?;
            let id = ChunkId::parse(&id).ok_or_else(|| IndexError::Malformed(format!("bad chunk id `{id}`")))?;
            r.read_exact(&mut buf)?;
            let values = buf.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
            let v = EmbeddingVector::from_unit(values).map_err(|e| IndexError::Malformed(e.to_string()))?;
            entries.push((id, v));
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(IndexError::Malformed("trailing bytes".into()));
        }
        VectorIndex::new(dim, entries, watermark)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IndexError> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        let mut w = BufWriter::new(File::create(&tmp)?);
        self.write_to(&mut w)?;
        w.flush()?;
        drop(w);
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IndexError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32, IndexError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64, IndexError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(values: Vec<f32>) -> EmbeddingVector {
        EmbeddingVector::normalized(values).unwrap()
    }

    fn basis(dim: usize, i: usize) -> EmbeddingVector {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        unit(v)
    }

    #[test]
    fn cosine_examples() {
        let v = unit(vec![0.3, -0.2, 0.9]);
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&basis(3, 0), &basis(3, 1)).unwrap(), 0.0);
        assert_eq!(cosine(&v, &EmbeddingVector::zeros(3)).unwrap(), 0.0);
        assert!(matches!(cosine(&v, &basis(2, 0)), Err(IndexError::DimMismatch { .. })));
    }

    #[test]
    fn exact_match_ranks_first() {
        let entries = (0..4).map(|i| (ChunkId::new(format!("d{i}"), 0), basis(4, i))).collect();
        let idx = VectorIndex::new(4, entries, 7).unwrap();
        let hits = idx.search(&basis(4, 2), 3).unwrap();
        assert_eq!(hits[0].chunk_id, ChunkId::new("d2", 0));
        assert_eq!(hits[0].score, 1.0);
        assert_eq!(hits.iter().map(|h| h.rank).collect::<Vec<_>>(), [1, 2, 3]);
        // remaining scores tie at 0.0 and fall back to chunk id order
        assert_eq!(hits[1].chunk_id.doc_id, "d0");
        assert_eq!(hits[2].chunk_id.doc_id, "d1");
    }

    #[test]
    fn k_beyond_len_returns_all() {
        let entries = (0..2).map(|i| (ChunkId::new("d", i as u32), basis(2, i))).collect();
        let idx = VectorIndex::new(2, entries, 0).unwrap();
        assert_eq!(idx.search(&basis(2, 1), 10).unwrap().len(), 2);
        assert!(VectorIndex::empty(2, 0).search(&basis(2, 1), 3).unwrap().is_empty());
        assert!(matches!(idx.search(&basis(2, 1), 0), Err(IndexError::ZeroK)));
    }

    #[test]
    fn max_per_doc_caps_hits() {
        let q = unit(vec![1.0, 0.0]);
        let entries = vec![
            (ChunkId::new("a", 0), unit(vec![1.0, 0.01])),
            (ChunkId::new("a", 1), unit(vec![1.0, 0.02])),
            (ChunkId::new("b", 0), unit(vec![1.0, 0.5])),
        ];
        let idx = VectorIndex::new(2, entries, 0).unwrap();
        let opts = SearchOptions { k: 2, max_per_doc: Some(1) };
        let hits = idx.search_with(&q, opts).unwrap();
        assert_eq!(hits.iter().map(|h| h.chunk_id.to_string()).collect::<Vec<_>>(), ["a#0", "b#0"]);
    }

    #[test]
    fn rejects_duplicates_and_bad_dims() {
        let e = vec![(ChunkId::new("a", 0), basis(2, 0)), (ChunkId::new("a", 0), basis(2, 1))];
        assert!(matches!(VectorIndex::new(2, e, 0), Err(IndexError::DuplicateChunk(_))));
        assert!(matches!(
            VectorIndex::new(3, vec![(ChunkId::new("a", 0), basis(2, 0))], 0),
            Err(IndexError::DimMismatch { .. })
        ));
    }

    #[test]
    fn bad_magic() {
        let err = VectorIndex::read_from(&b"NOPE\0\0\0\0"[..]).unwrap_err();
        assert!(matches!(err, IndexError::Malformed(_)));
    }

    proptest! {
        #[test]
        fn file_round_trip_is_bit_exact(
            vecs in proptest::collection::vec(proptest::collection::vec(-1.0f32..1.0, 8), 0..20),
            watermark in any::<u64>(),
        ) {
            let entries = vecs
                .into_iter()
                .enumerate()
                .map(|(i, v)| (ChunkId::new(format!("doc#{}", i % 3), i as u32), unit(v)))
                .collect();
            let idx = VectorIndex::new(8, entries, watermark).unwrap();
            let mut bytes = Vec::new();
            idx.write_to(&mut bytes).unwrap();
            let back = VectorIndex::read_from(&bytes[..]).unwrap();
            prop_assert_eq!(&back, &idx);
            let mut again = Vec::new();
            back.write_to(&mut again).unwrap();
            prop_assert_eq!(again, bytes);
        }
    }
}
