use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::RetrievalError;
use crate::redaction::scan_exposure;
use crate::sync::Semaphore;

pub const LOCAL_PROVIDER_ID: &str = "local-hash3-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub provider_id: String,
}

impl EmbeddingVector {
    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Source of raw (unnormalized) embeddings.
pub trait EmbeddingProvider: Send + Sync {
    fn id(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed_raw(&self, text: &str) -> Result<Vec<f64>, RetrievalError>;
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for &P {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed_raw(&self, text: &str) -> Result<Vec<f64>, RetrievalError> {
        (**self).embed_raw(text)
    }
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for Box<P> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed_raw(&self, text: &str) -> Result<Vec<f64>, RetrievalError> {
        (**self).embed_raw(text)
    }
}

/// Embeds already-redacted text and L2-normalizes the result.
///
/// Text in which the redaction scanner still finds sensitive data is
/// refused unless `allow_unredacted` is set.
pub fn embed(text: &str, provider: &dyn EmbeddingProvider, allow_unredacted: bool) -> Result<EmbeddingVector, RetrievalError> {
    if !allow_unredacted && scan_exposure(text).exposure {
        return Err(RetrievalError::UnredactedInput);
    }
    let mut values = provider.embed_raw(text)?;
    if values.len() != provider.dimension() {
        return Err(RetrievalError::DimensionMismatch { expected: provider.dimension(), got: values.len() });
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !norm.is_finite() || norm == 0.0 {
        return Err(RetrievalError::DegenerateVector);
    }
    values.iter_mut().for_each(|v| *v /= norm);
    Ok(EmbeddingVector { values, provider_id: provider.id().to_string() })
}

/// Deterministic offline embedder: signed feature hashing of character
/// 3-grams of each lowercased token (with `<` `>` word markers).
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dimension: usize,
}

impl HashingEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        HashingEmbedder { dimension }
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder::new(super::DEFAULT_DIMENSION)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl EmbeddingProvider for HashingEmbedder {
    fn id(&self) -> &str {
        LOCAL_PROVIDER_ID
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_raw(&self, text: &str) -> Result<Vec<f64>, RetrievalError> {
        let dim = self.dimension as u64;
        let mut v = vec![0.0; self.dimension];
        let add = |v: &mut Vec<f64>, gram: &str| {
            let h = fnv1a(gram.as_bytes());
            v[(h % dim) as usize] += if h >> 63 == 0 { 1.0 } else { -1.0 };
        };
        let lower = text.to_lowercase();
        let mut any = false;
        for token in lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            let marked: Vec<char> = std::iter::once('<').chain(token.chars()).chain(std::iter::once('>')).collect();
            for w in marked.windows(3) {
                add(&mut v, &w.iter().collect::<String>());
            }
            any = true;
        }
        if !any || v.iter().all(|&x| x == 0.0) {
            add(&mut v, "<empty>");
        }
        Ok(v)
    }
}

/// Memoizes a provider by content hash and bounds concurrent upstream calls.
pub struct CachedProvider<P> {
    inner: P,
    cache: Mutex<HashMap<[u8; 32], Vec<f64>>>,
    calls: AtomicUsize,
    in_flight: Semaphore,
}

impl<P: EmbeddingProvider> CachedProvider<P> {
    pub fn new(inner: P, max_in_flight: usize) -> Self {
        CachedProvider { inner, cache: Mutex::new(HashMap::new()), calls: AtomicUsize::new(0), in_flight: Semaphore::new(max_in_flight) }
    }

    /// Number of requests that reached the wrapped provider.
    pub fn upstream_calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn key(&self, text: &str) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.inner.id().as_bytes());
        h.update([0]);
        h.update(text.as_bytes());
        h.finalize().into()
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for CachedProvider<P> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn embed_raw(&self, text: &str) -> Result<Vec<f64>, RetrievalError> {
        let key = self.key(text);
        if let Some(v) = self.cache.lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
            return Ok(v.clone());
        }
        let _permit = self.in_flight.acquire();
        self.calls.fetch_add(1, Ordering::SeqCst);
        let v = self.inner.embed_raw(text)?;
        self.cache.lock().unwrap_or_else(|e| e.into_inner()).insert(key, v.clone());
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::cosine;

    fn f32s(v: &EmbeddingVector) -> Vec<f32> {
        v.values.iter().map(|&x| x as f32).collect()
    }

    #[test]
    fn deterministic_and_unit_norm() {
        let p = HashingEmbedder::default();
        let a = embed("verify your account now", &p, false).unwrap();
        let b = embed("verify your account now", &p, false).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dimension(), 1536);
        assert!((a.norm() - 1.0).abs() < 1e-9);
        assert_eq!(a.provider_id, LOCAL_PROVIDER_ID);
    }

    #[test]
    fn empty_text_still_embeds() {
        let v = embed("", &HashingEmbedder::new(16), false).unwrap();
        assert!((v.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn similar_texts_closer_than_unrelated() {
        let p = HashingEmbedder::default();
        let a = embed("your account has been suspended, verify your password", &p, false).unwrap();
        let b = embed("account suspended: verify the password on your account", &p, false).unwrap();
        let c = embed("minutes from the quarterly budget meeting are attached", &p, false).unwrap();
        assert!(cosine(&f32s(&a), &f32s(&b)) > cosine(&f32s(&a), &f32s(&c)) + 0.2);
    }

    #[test]
    fn unredacted_input_refused() {
        let p = HashingEmbedder::new(32);
        assert!(matches!(embed("my ssn is 123-45-6789", &p, false), Err(RetrievalError::UnredactedInput)));
        assert!(embed("my ssn is 123-45-6789", &p, true).is_ok());
        assert!(embed("my ssn is ***-**-6789", &p, false).is_ok());
    }

    struct Wrong;
    impl EmbeddingProvider for Wrong {
        fn id(&self) -> &str {
            "wrong"
        }
        fn dimension(&self) -> usize {
            8
        }
        fn embed_raw(&self, _: &str) -> Result<Vec<f64>, RetrievalError> {
            Ok(vec![1.0; 4])
        }
    }

    #[test]
    fn dimension_checked() {
        assert!(matches!(embed("x", &Wrong, false), Err(RetrievalError::DimensionMismatch { expected: 8, got: 4 })));
    }

    #[test]
    fn cache_avoids_repeat_calls() {
        let p = CachedProvider::new(HashingEmbedder::new(64), 2);
        for _ in 0..3 {
            embed("alpha", &p, false).unwrap();
            embed("beta", &p, false).unwrap();
        }
        assert_eq!(p.upstream_calls(), 2);
        assert_eq!(embed("alpha", &p, false).unwrap(), embed("alpha", &HashingEmbedder::new(64), false).unwrap());
    }
}
