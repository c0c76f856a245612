//! Text-generation provider interface used by the exposure baseline and
//! provider-mode explanations. No network client ships with this crate.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::sync::Semaphore;
use crate::{Error, Result};

const DEFAULT_PRICES: &str = include_str!("../assets/prices.toml");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Generation {
    pub text: String,
    /// Token counts as reported by the provider, if any.
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TextGenError {
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("provider timed out")]
    Timeout,
    #[error("provider refused: {0}")]
    Refused(String),
}

pub trait TextGenProvider: Send + Sync {
    fn id(&self) -> &str;
    fn generate(&self, prompt: &str, max_tokens: u32) -> Result<Generation, TextGenError>;
}

impl<P: TextGenProvider + ?Sized> TextGenProvider for &P {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn generate(&self, prompt: &str, max_tokens: u32) -> Result<Generation, TextGenError> {
        (**self).generate(prompt, max_tokens)
    }
}

impl<P: TextGenProvider + ?Sized> TextGenProvider for Box<P> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn generate(&self, prompt: &str, max_tokens: u32) -> Result<Generation, TextGenError> {
        (**self).generate(prompt, max_tokens)
    }
}

/// Caches generations by content hash and bounds concurrent upstream calls.
pub struct CachedTextGen<P> {
    inner: P,
    cache: Mutex<HashMap<[u8; 32], Generation>>,
    calls: AtomicUsize,
    in_flight: Semaphore,
}

impl<P: TextGenProvider> CachedTextGen<P> {
    pub fn new(inner: P, max_in_flight: usize) -> Self {
        CachedTextGen { inner, cache: Mutex::new(HashMap::new()), calls: AtomicUsize::new(0), in_flight: Semaphore::new(max_in_flight) }
    }

    pub fn upstream_calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<P: TextGenProvider> TextGenProvider for CachedTextGen<P> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn generate(&self, prompt: &str, max_tokens: u32) -> Result<Generation, TextGenError> {
        let mut h = Sha256::new();
        h.update(self.inner.id().as_bytes());
        h.update(max_tokens.to_le_bytes());
        h.update(prompt.as_bytes());
        let key: [u8; 32] = h.finalize().into();
        if let Some(g) = self.cache.lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
            return Ok(g.clone());
        }
        let _permit = self.in_flight.acquire();
        self.calls.fetch_add(1, Ordering::SeqCst);
        let g = self.inner.generate(prompt, max_tokens)?;
        self.cache.lock().unwrap_or_else(|e| e.into_inner()).insert(key, g.clone());
        Ok(g)
    }
}

/// Rough token estimate for providers that do not report usage.
pub fn estimate_tokens(text: &str) -> u64 {
    text.chars().count().div_ceil(4) as u64
}

/// Offline stand-in that answers "yes" when the prompt contains any of its
/// keywords. Reports zero tokens.
#[derive(Debug, Clone)]
pub struct KeywordStub {
    pub keywords: Vec<String>,
}

impl KeywordStub {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(keywords: I) -> Self {
        KeywordStub { keywords: keywords.into_iter().map(|k| k.into().to_lowercase()).collect() }
    }
}

impl TextGenProvider for KeywordStub {
    fn id(&self) -> &str {
        "stub-keyword"
    }

    fn generate(&self, prompt: &str, _max_tokens: u32) -> Result<Generation, TextGenError> {
        let lower = prompt.to_lowercase();
        let hit = self.keywords.iter().any(|k| lower.contains(k.as_str()));
        Ok(Generation { text: if hit { "yes" } else { "no" }.into(), prompt_tokens: Some(0), completion_tokens: Some(0) })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Price {
    pub input_per_1k: f64,
    pub output_per_1k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceSheet {
    #[serde(default)]
    pub models: BTreeMap<String, Price>,
}

impl Default for PriceSheet {
    fn default() -> Self {
        PriceSheet::from_toml_str(DEFAULT_PRICES).expect("bundled price sheet is valid")
    }
}

impl PriceSheet {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let s: PriceSheet = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if let Some((name, _)) = s.models.iter().find(|(_, p)| !(p.input_per_1k >= 0.0 && p.output_per_1k >= 0.0)) {
            return Err(Error::Config(format!("negative price for {name}")));
        }
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Cost of a call; unknown providers cost nothing.
    pub fn cost(&self, provider: &str, prompt_tokens: u64, completion_tokens: u64) -> f64 {
        self.models.get(provider).map_or(0.0, |p| {
            prompt_tokens as f64 / 1000.0 * p.input_per_1k + completion_tokens as f64 / 1000.0 * p.output_per_1k
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stub_and_prices() {
        let stub = KeywordStub::new(["verify"]);
        assert_eq!(stub.generate("Please VERIFY now", 4).unwrap().text, "yes");
        assert_eq!(stub.generate("lunch?", 4).unwrap().text, "no");
        let sheet = PriceSheet::from_toml_str("[models.m]\ninput_per_1k = 1.0\noutput_per_1k = 2.0\n").unwrap();
        assert_eq!(sheet.cost("m", 2000, 500), 3.0);
        assert_eq!(sheet.cost("stub-keyword", 2000, 500), 0.0);
        assert!(PriceSheet::from_toml_str("[models.m]\ninput_per_1k = -1.0\noutput_per_1k = 0.0\n").is_err());
        assert_eq!(estimate_tokens("abcdefgh"), 2);
        assert_eq!(estimate_tokens("abcdefghi"), 3);
        let _ = PriceSheet::default();
    }

    #[test]
    fn cache_hits_skip_upstream() {
        let c = CachedTextGen::new(KeywordStub::new(["a"]), 2);
        for _ in 0..3 {
            c.generate("abc", 4).unwrap();
        }
        c.generate("xyz", 4).unwrap();
        assert_eq!(c.upstream_calls(), 2);
    }
}
