//! Retrieval-augmented answering over the catalog: document chunking, a
//! vector index over chunk embeddings, rule-based intent parsing and answer
//! composition with per-answer sources.

mod answer;
mod chunk;
mod index;
mod intent;
mod provider;

pub use answer::{
    answer, answer_intent, build_prompt, edge_noun, facet_edges, unverified_sources, AnswerMode, GroundedAnswer,
    Knowledge, Source, MAX_CONTEXT_CHUNKS, MAX_CONTEXT_FACTS, NO_ANSWER,
};
pub use chunk::{chunk_document, Chunk, ChunkConfig, SourceKind};
pub use index::{dot, ScoredChunk, VectorIndex, EMBED_BATCH};
pub use intent::{dataset_aliases, match_datasets, parse_intent, Intent};
pub use provider::{
    fnv1a, CompletionProvider, EmbeddingProvider, HashingEmbedder, HttpCompleter, HttpEmbedder, ProviderError,
    HASHING_DIMENSION,
};

use serde::{Deserialize, Serialize};

use crate::graph::QueryError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RetrievalError {
    #[error("document is empty")]
    EmptyDocument,
    #[error("index is empty")]
    EmptyIndex,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("embedding dimension {got} does not match index dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("provider error{}: {message}", chunk_id.as_ref().map(|c| format!(" on chunk {c}")).unwrap_or_default())]
    Provider { chunk_id: Option<String>, message: String },
    #[error("ambiguous comparison: {0}")]
    AmbiguousComparison(String),
    #[error(transparent)]
    Query(#[from] QueryError),
}

/// Retrieval settings as they appear in the service configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub embedding_endpoint: Option<String>,
    pub completion_endpoint: Option<String>,
    pub embedding_dimension: usize,
    pub top_k: usize,
    pub chunk_tokens: usize,
    pub chunk_overlap: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            embedding_endpoint: None,
            completion_endpoint: None,
            embedding_dimension: HASHING_DIMENSION,
            top_k: 3,
            chunk_tokens: 300,
            chunk_overlap: 50,
        }
    }
}

impl RetrievalConfig {
    pub fn chunking(&self) -> ChunkConfig {
        ChunkConfig { tokens: self.chunk_tokens, overlap: self.chunk_overlap }
    }
}
