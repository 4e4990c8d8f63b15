use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};

use super::{Chunk, EmbeddingProvider, RetrievalError};

/// In-memory vector index keyed by chunk id. Reads take `&self`; callers
/// that share an index across threads wrap it in a reader/writer lock.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct VectorIndex {
    dimension: Option<usize>,
    chunks: BTreeMap<String, Chunk>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredChunk {
    pub chunk: Chunk,
    pub score: f64,
}

/// Heap entry ordered so that "greater" means "ranks higher".
struct Ranked<'a> {
    score: f64,
    chunk: &'a Chunk,
}

impl Ord for Ranked<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score.total_cmp(&other.score).then_with(|| other.chunk.id.cmp(&self.chunk.id))
    }
}

impl PartialOrd for Ranked<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Ranked<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked<'_> {}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = dot(&v, &v).sqrt();
    if !norm.is_finite() || norm == 0.0 {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

pub const EMBED_BATCH: usize = 64;

impl VectorIndex {
    pub fn new() -> Self {
        VectorIndex::default()
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn dimension(&self) -> Option<usize> {
        self.dimension
    }

    pub fn get(&self, id: &str) -> Option<&Chunk> {
        self.chunks.get(id)
    }

    pub fn chunks(&self) -> impl Iterator<Item = &Chunk> {
        self.chunks.values()
    }

    /// Drops every chunk of a dataset; returns how many were removed.
    pub fn remove_dataset(&mut self, doi: &str) -> usize {
        let before = self.chunks.len();
        self.chunks.retain(|_, c| c.source_doi != doi);
        before - self.chunks.len()
    }

    /// Embeds in batches and inserts, replacing chunks with the same id. All
    /// embeddings are obtained and checked before the index is touched.
    pub fn embed_and_index(
        &mut self,
        chunks: Vec<Chunk>,
        provider: &dyn EmbeddingProvider,
    ) -> Result<usize, RetrievalError> {
        let mut dimension = self.dimension;
        let mut ready = Vec::with_capacity(chunks.len());
        for batch in chunks.chunks(EMBED_BATCH) {
            let texts: Vec<String> = batch.iter().map(|c| c.text.clone()).collect();
            let vectors = provider
                .embed(&texts)
                .map_err(|e| RetrievalError::Provider { chunk_id: Some(batch[0].id.clone()), message: e.0 })?;
            if vectors.len() != batch.len() {
                return Err(RetrievalError::Provider {
                    chunk_id: Some(batch[0].id.clone()),
                    message: format!("{} vectors for {} texts", vectors.len(), batch.len()),
                });
            }
            for (chunk, v) in batch.iter().zip(vectors) {
                let expected = *dimension.get_or_insert(v.len());
                if v.len() != expected {
                    return Err(RetrievalError::DimensionMismatch { expected, got: v.len() });
                }
                let embedding = unit(v).ok_or_else(|| RetrievalError::Provider {
                    chunk_id: Some(chunk.id.clone()),
                    message: "zero or non-finite embedding".into(),
                })?;
                ready.push(Chunk { embedding, ..chunk.clone() });
            }
        }
        let n = ready.len();
        self.dimension = dimension;
        for c in ready {
            self.chunks.insert(c.id.clone(), c);
        }
        Ok(n)
    }

    /// Inserts chunks that already carry embeddings (from another index).
    pub fn insert_embedded(&mut self, chunks: Vec<Chunk>) -> Result<(), RetrievalError> {
        let mut dimension = self.dimension;
        for c in &chunks {
            let expected = *dimension.get_or_insert(c.embedding.len());
            if c.embedding.len() != expected {
                return Err(RetrievalError::DimensionMismatch { expected, got: c.embedding.len() });
            }
        }
        self.dimension = dimension;
        for c in chunks {
            self.chunks.insert(c.id.clone(), c);
        }
        Ok(())
    }

    /// The `k` chunks most cosine-similar to `query`, best first, ties broken
    /// by ascending chunk id.
    pub fn retrieve(
        &self,
        query: &str,
        provider: &dyn EmbeddingProvider,
        k: usize,
    ) -> Result<Vec<ScoredChunk>, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::InvalidK);
        }
        if self.chunks.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        let v = provider
            .embed(&[query.to_string()])
            .map_err(|e| RetrievalError::Provider { chunk_id: None, message: e.0 })?
            .pop()
            .ok_or_else(|| RetrievalError::Provider { chunk_id: None, message: "no vector returned".into() })?;
        let expected = self.dimension.unwrap_or(v.len());
        if v.len() != expected {
            return Err(RetrievalError::DimensionMismatch { expected, got: v.len() });
        }
        // A query with no usable tokens is orthogonal to everything.
        let q = unit(v).unwrap_or_else(|| vec![0.0; expected]);
        Ok(self.top_k(&q, k))
    }

    /// Top-k against an already unit-length query vector.
    pub fn top_k(&self, q: &[f64], k: usize) -> Vec<ScoredChunk> {
        let mut heap: BinaryHeap<Reverse<Ranked>> = BinaryHeap::with_capacity(k + 1);
        for chunk in self.chunks.values() {
            let score = dot(q, &chunk.embedding).clamp(-1.0, 1.0);
            heap.push(Reverse(Ranked { score, chunk }));
            if heap.len() > k {
                heap.pop();
            }
        }
        let mut ranked: Vec<Ranked> = heap.into_iter().map(|Reverse(r)| r).collect();
        ranked.sort_by(|a, b| b.cmp(a));
        ranked.into_iter().map(|r| ScoredChunk { chunk: r.chunk.clone(), score: r.score }).collect()
    }
}
