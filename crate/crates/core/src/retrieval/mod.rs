//! Phase 2 semantic layer: embeddings of redacted text, a known-phishing
//! vector corpus with exact and approximate cosine search, and the
//! similarity statistics fed to the cascade.

mod hnsw;
mod index;
mod provider;

use serde::{Deserialize, Serialize};

pub use hnsw::AnnParams;
pub use index::{build_index, query_topk, CorpusIndex, CorpusKind, IndexEntry, IndexItem, SearchMode};
pub use provider::{embed, CachedProvider, EmbeddingProvider, EmbeddingVector, HashingEmbedder, LOCAL_PROVIDER_ID};

/// Default neighbour count per query.
pub const DEFAULT_K: usize = 8;
/// Default embedding width.
pub const DEFAULT_DIMENSION: usize = 1536;
/// Longest stored snippet, in characters.
pub const SNIPPET_CHARS: usize = 280;

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("provider mismatch: index built with {index}, query from {query}")]
    ProviderMismatch { index: String, query: String },
    #[error("input still contains sensitive data; redact it first")]
    UnredactedInput,
    #[error("embedding has non-finite or all-zero values")]
    DegenerateVector,
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("item {0} is not labeled phishing; pass allow_mixed to index it anyway")]
    MixedLabelCorpus(String),
    #[error("invalid index files: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: String,
    pub similarity: f64,
    pub snippet: String,
}

/// Hits in nonincreasing similarity order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NeighborSet {
    pub hits: Vec<Neighbor>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SimilarityStats {
    pub s_top: f64,
    /// Mean of the best three hits, or of all hits when fewer exist.
    pub s_avg: f64,
    /// True when there were no hits and both values default to 0.
    pub empty: bool,
}

pub fn similarity_stats(n: &NeighborSet) -> SimilarityStats {
    if n.hits.is_empty() {
        return SimilarityStats { s_top: 0.0, s_avg: 0.0, empty: true };
    }
    let top: Vec<f64> = n.hits.iter().take(3).map(|h| h.similarity).collect();
    SimilarityStats {
        s_top: n.hits.iter().map(|h| h.similarity).fold(f64::NEG_INFINITY, f64::max),
        s_avg: top.iter().sum::<f64>() / top.len() as f64,
        empty: false,
    }
}

/// Cosine similarity accumulated in f64, clamped to [-1, 1].
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}
