use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::hnsw::{AnnParams, Hnsw, Rows};
use super::provider::{embed, EmbeddingProvider, EmbeddingVector};
use super::{Neighbor, NeighborSet, RetrievalError, SNIPPET_CHARS};
use crate::message::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    Exact,
    #[default]
    Approximate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusKind {
    PhishingOnly,
    Mixed,
}

/// A redacted document to index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexItem {
    pub id: String,
    pub text: String,
    pub label: Option<Label>,
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub snippet: String,
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IndexMeta {
    format_version: u32,
    provider_id: String,
    dimension: usize,
    count: usize,
    params: AnnParams,
    corpus_kind: CorpusKind,
}

const FORMAT_VERSION: u32 = 1;
const VECTOR_MAGIC: &[u8; 4] = b"PVEC";

/// Immutable vector corpus; safe to share across query threads.
#[derive(Debug, Clone)]
pub struct CorpusIndex {
    provider_id: String,
    dimension: usize,
    kind: CorpusKind,
    entries: Vec<IndexEntry>,
    vectors: Vec<f32>,
    norms: Vec<f64>,
    graph: Hnsw,
}

fn snippet(text: &str) -> String {
    text.chars().take(SNIPPET_CHARS).collect()
}

impl CorpusIndex {
    /// Builds an index from precomputed vectors `(id, snippet, values)`.
    pub fn from_vectors(
        provider_id: &str,
        dimension: usize,
        rows: Vec<(String, String, Vec<f64>)>,
        params: AnnParams,
        kind: CorpusKind,
    ) -> Result<CorpusIndex, RetrievalError> {
        let mut seen = HashSet::new();
        let mut entries = Vec::with_capacity(rows.len());
        let mut vectors = Vec::with_capacity(rows.len() * dimension);
        let mut norms = Vec::with_capacity(rows.len());
        for (id, snip, values) in rows {
            if !seen.insert(id.clone()) {
                return Err(RetrievalError::DuplicateId(id));
            }
            if values.len() != dimension {
                return Err(RetrievalError::DimensionMismatch { expected: dimension, got: values.len() });
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(RetrievalError::DegenerateVector);
            }
            let row: Vec<f32> = values.iter().map(|&v| v as f32).collect();
            let norm = row.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
            vectors.extend_from_slice(&row);
            norms.push(norm);
            entries.push(IndexEntry { id, snippet: snippet(&snip), norm });
        }
        let graph = Hnsw::build(Rows { data: &vectors, dim: dimension, norms: &norms }, params);
        Ok(CorpusIndex { provider_id: provider_id.to_string(), dimension, kind, entries, vectors, norms, graph })
    }

    fn rows(&self) -> Rows<'_> {
        Rows { data: &self.vectors, dim: self.dimension, norms: &self.norms }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn kind(&self) -> CorpusKind {
        self.kind
    }

    pub fn params(&self) -> AnnParams {
        self.graph.params()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    /// Stored (single-precision) vector of entry `i`.
    pub fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn query(&self, q: &EmbeddingVector, k: usize, mode: SearchMode) -> Result<NeighborSet, RetrievalError> {
        if q.provider_id != self.provider_id {
            return Err(RetrievalError::ProviderMismatch { index: self.provider_id.clone(), query: q.provider_id.clone() });
        }
        if q.dimension() != self.dimension {
            return Err(RetrievalError::DimensionMismatch { expected: self.dimension, got: q.dimension() });
        }
        if self.is_empty() || k == 0 {
            return Ok(NeighborSet::default());
        }
        // Queries are compared at the stored precision.
        let qv: Vec<f32> = q.values.iter().map(|&v| v as f32).collect();
        let q_norm = qv.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
        let rows = self.rows();
        let ranked: Vec<(u32, f64)> = match mode {
            SearchMode::Exact => {
                let mut all: Vec<(u32, f64)> =
                    (0..self.len() as u32).map(|i| (i, rows.sim_to(&qv, q_norm, i))).collect();
                all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                all.truncate(k);
                all
            }
            SearchMode::Approximate => self.graph.search(rows, &qv, q_norm, k),
        };
        Ok(NeighborSet {
            hits: ranked
                .into_iter()
                .map(|(i, sim)| {
                    let e = &self.entries[i as usize];
                    Neighbor { id: e.id.clone(), similarity: sim, snippet: e.snippet.clone() }
                })
                .collect(),
        })
    }

    /// Writes `meta.json`, `manifest.jsonl`, `vectors.bin` and `graph.bin`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), RetrievalError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let meta = IndexMeta {
            format_version: FORMAT_VERSION,
            provider_id: self.provider_id.clone(),
            dimension: self.dimension,
            count: self.len(),
            params: self.params(),
            corpus_kind: self.kind,
        };
        fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
        let mut manifest = BufWriter::new(fs::File::create(dir.join("manifest.jsonl"))?);
        for e in &self.entries {
            serde_json::to_writer(&mut manifest, e)?;
            manifest.write_all(b"\n")?;
        }
        manifest.flush()?;
        let mut vec_out = BufWriter::new(fs::File::create(dir.join("vectors.bin"))?);
        vec_out.write_all(VECTOR_MAGIC)?;
        vec_out.write_all(&(self.dimension as u32).to_le_bytes())?;
        vec_out.write_all(&(self.len() as u32).to_le_bytes())?;
        for v in &self.vectors {
            vec_out.write_all(&v.to_le_bytes())?;
        }
        vec_out.flush()?;
        fs::write(dir.join("graph.bin"), self.graph.to_bytes())?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<CorpusIndex, RetrievalError> {
        let dir = dir.as_ref();
        let meta: IndexMeta = serde_json::from_slice(&fs::read(dir.join("meta.json"))?)?;
        if meta.format_version != FORMAT_VERSION {
            return Err(RetrievalError::Format(format!("unsupported format version {}", meta.format_version)));
        }
        let mut entries = Vec::with_capacity(meta.count);
        for line in BufReader::new(fs::File::open(dir.join("manifest.jsonl"))?).lines() {
            let line = line?;
            if !line.trim().is_empty() {
                entries.push(serde_json::from_str::<IndexEntry>(&line)?);
            }
        }
        let raw = fs::read(dir.join("vectors.bin"))?;
        if raw.len() < 12 || &raw[..4] != VECTOR_MAGIC {
            return Err(RetrievalError::Format("vectors.bin: bad header".into()));
        }
        let dim = u32::from_le_bytes(raw[4..8].try_into().expect("4 bytes")) as usize;
        let count = u32::from_le_bytes(raw[8..12].try_into().expect("4 bytes")) as usize;
        if dim != meta.dimension || count != meta.count || entries.len() != count {
            return Err(RetrievalError::Format("meta, manifest and vectors disagree on shape".into()));
        }
        if raw.len() != 12 + dim * count * 4 {
            return Err(RetrievalError::Format("vectors.bin: unexpected length".into()));
        }
        let vectors: Vec<f32> =
            raw[12..].chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes"))).collect();
        let norms: Vec<f64> = vectors
            .chunks(dim.max(1))
            .take(count)
            .map(|r| r.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt())
            .collect();
        let graph = Hnsw::from_bytes(&fs::read(dir.join("graph.bin"))?, meta.params, count)?;
        Ok(CorpusIndex {
            provider_id: meta.provider_id,
            dimension: dim,
            kind: meta.corpus_kind,
            entries,
            vectors,
            norms,
            graph,
        })
    }
}

/// Embeds and indexes redacted documents.
///
/// Every item must be labeled phishing unless `allow_mixed` is set, in
/// which case the index is marked [`CorpusKind::Mixed`].
pub fn build_index(
    items: &[IndexItem],
    provider: &dyn EmbeddingProvider,
    params: AnnParams,
    allow_mixed: bool,
) -> Result<CorpusIndex, RetrievalError> {
    let mut kind = CorpusKind::PhishingOnly;
    for item in items {
        if item.label != Some(Label::Phishing) {
            if !allow_mixed {
                return Err(RetrievalError::MixedLabelCorpus(item.id.clone()));
            }
            kind = CorpusKind::Mixed;
        }
    }
    let mut seen = HashSet::new();
    if let Some(dup) = items.iter().find(|i| !seen.insert(i.id.as_str())) {
        return Err(RetrievalError::DuplicateId(dup.id.clone()));
    }
    let vectors: Vec<EmbeddingVector> =
        items.par_iter().map(|item| embed(&item.text, provider, false)).collect::<Result<_, _>>()?;
    let rows = items.iter().zip(vectors).map(|(item, v)| (item.id.clone(), item.text.clone(), v.values)).collect();
    CorpusIndex::from_vectors(provider.id(), provider.dimension(), rows, params, kind)
}

pub fn query_topk(index: &CorpusIndex, q: &EmbeddingVector, k: usize, mode: SearchMode) -> Result<NeighborSet, RetrievalError> {
    index.query(q, k, mode)
}
