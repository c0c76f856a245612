//! DNS record checks behind a pluggable resolver.
//!
//! Resolution failures (timeouts, missing fixture rows) are reported as
//! [`DnsLookup::Unknown`], which fires no missing-record indicators.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::RwLock;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::sync::Semaphore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpfStatus {
    None,
    PassPolicy,
    Softfail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DnsRecordSet {
    pub has_mx: bool,
    pub spf: SpfStatus,
    pub has_dmarc: bool,
}

impl DnsRecordSet {
    /// MX present, an SPF policy without `~all`, and a DMARC record.
    pub fn is_fully_authenticated(&self) -> bool {
        self.has_mx && self.spf == SpfStatus::PassPolicy && self.has_dmarc
    }
}

/// Outcome of a lookup as seen by the rule engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DnsLookup {
    Known {
        #[serde(flatten)]
        records: DnsRecordSet,
    },
    Unknown,
}

impl DnsLookup {
    pub fn records(&self) -> Option<&DnsRecordSet> {
        match self {
            DnsLookup::Known { records } => Some(records),
            DnsLookup::Unknown => None,
        }
    }
}

impl From<DnsRecordSet> for DnsLookup {
    fn from(records: DnsRecordSet) -> Self {
        DnsLookup::Known { records }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DnsError {
    #[error("empty domain")]
    EmptyDomain,
    #[error("lookup for {0} timed out")]
    Timeout(String),
    #[error("no records known for {0}")]
    NoData(String),
    #[error("resolver failure: {0}")]
    Resolver(String),
}

pub trait DnsResolver: Send + Sync {
    fn lookup(&self, domain: &str) -> Result<DnsRecordSet, DnsError>;
}

/// Resolves `domain`, mapping every resolver failure to `Unknown`.
pub fn resolve_dns(domain: &str, resolver: &dyn DnsResolver) -> Result<DnsLookup, DnsError> {
    let domain = domain.trim().trim_end_matches('.').to_ascii_lowercase();
    if domain.is_empty() {
        return Err(DnsError::EmptyDomain);
    }
    match resolver.lookup(&domain) {
        Ok(records) => Ok(DnsLookup::Known { records }),
        Err(err) => {
            tracing::debug!(%domain, %err, "dns records unknown");
            Ok(DnsLookup::Unknown)
        }
    }
}

/// Classifies the SPF status from a domain's TXT records.
pub fn classify_spf<S: AsRef<str>>(txt_records: &[S]) -> SpfStatus {
    let policy = txt_records
        .iter()
        .map(|r| r.as_ref().trim().trim_matches('"').to_ascii_lowercase())
        .find(|r| r == "v=spf1" || r.starts_with("v=spf1 "));
    match policy {
        None => SpfStatus::None,
        Some(p) if p.split_whitespace().any(|t| t == "~all") => SpfStatus::Softfail,
        Some(_) => SpfStatus::PassPolicy,
    }
}

/// True when any `_dmarc` TXT record carries a DMARC version tag.
pub fn has_dmarc_record<S: AsRef<str>>(txt_records: &[S]) -> bool {
    txt_records
        .iter()
        .any(|r| r.as_ref().trim().trim_matches('"').to_ascii_lowercase().starts_with("v=dmarc1"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FixtureRow {
    domain: String,
    #[serde(default)]
    has_mx: bool,
    #[serde(default = "spf_none")]
    spf: SpfStatus,
    #[serde(default)]
    has_dmarc: bool,
    #[serde(default)]
    timeout: bool,
}

fn spf_none() -> SpfStatus {
    SpfStatus::None
}

/// Resolver answering from a JSONL snapshot `{domain, has_mx, spf, has_dmarc}`.
///
/// A row may set `"timeout": true` to simulate an unreachable resolver.
/// Domains absent from the snapshot yield [`DnsError::NoData`].
#[derive(Debug, Clone, Default)]
pub struct FixtureResolver {
    rows: HashMap<String, Result<DnsRecordSet, DnsError>>,
}

impl FixtureResolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, domain: &str, records: DnsRecordSet) {
        self.rows.insert(domain.to_ascii_lowercase(), Ok(records));
    }

    pub fn insert_timeout(&mut self, domain: &str) {
        let domain = domain.to_ascii_lowercase();
        self.rows.insert(domain.clone(), Err(DnsError::Timeout(domain)));
    }

    pub fn from_jsonl(text: &str) -> Result<Self, crate::Error> {
        let mut resolver = Self::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let row: FixtureRow = serde_json::from_str(line)
                .map_err(|e| crate::Error::Config(format!("dns fixture line {}: {e}", i + 1)))?;
            if row.timeout {
                resolver.insert_timeout(&row.domain);
            } else {
                resolver.insert(
                    &row.domain,
                    DnsRecordSet { has_mx: row.has_mx, spf: row.spf, has_dmarc: row.has_dmarc },
                );
            }
        }
        Ok(resolver)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, crate::Error> {
        Self::from_jsonl(&std::fs::read_to_string(path)?)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

impl DnsResolver for FixtureResolver {
    fn lookup(&self, domain: &str) -> Result<DnsRecordSet, DnsError> {
        self.rows
            .get(&domain.to_ascii_lowercase())
            .cloned()
            .unwrap_or_else(|| Err(DnsError::NoData(domain.to_string())))
    }
}

/// Resolver that treats every domain as unknown.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullResolver;

impl DnsResolver for NullResolver {
    fn lookup(&self, domain: &str) -> Result<DnsRecordSet, DnsError> {
        Err(DnsError::NoData(domain.to_string()))
    }
}

/// Wraps a resolver with a per-domain TTL cache and a cap on concurrent
/// lookups. Readers share the cache; inserts take the write lock.
pub struct CachingResolver<R> {
    inner: R,
    ttl: Duration,
    cache: RwLock<HashMap<String, (Instant, Result<DnsRecordSet, DnsError>)>>,
    in_flight: Semaphore,
    upstream_calls: AtomicUsize,
}

impl<R: DnsResolver> CachingResolver<R> {
    pub fn new(inner: R, ttl: Duration, max_in_flight: usize) -> Self {
        CachingResolver {
            inner,
            ttl,
            cache: RwLock::new(HashMap::new()),
            in_flight: Semaphore::new(max_in_flight),
            upstream_calls: AtomicUsize::new(0),
        }
    }

    /// Number of lookups forwarded to the wrapped resolver.
    pub fn upstream_calls(&self) -> usize {
        self.upstream_calls.load(Ordering::SeqCst)
    }

    fn cached(&self, domain: &str) -> Option<Result<DnsRecordSet, DnsError>> {
        let cache = self.cache.read().unwrap_or_else(|e| e.into_inner());
        cache
            .get(domain)
            .filter(|(at, _)| at.elapsed() < self.ttl)
            .map(|(_, r)| r.clone())
    }
}

impl<R: DnsResolver> DnsResolver for CachingResolver<R> {
    fn lookup(&self, domain: &str) -> Result<DnsRecordSet, DnsError> {
        let key = domain.to_ascii_lowercase();
        if let Some(hit) = self.cached(&key) {
            return hit;
        }
        let _permit = self.in_flight.acquire();
        // Another caller may have filled the entry while we waited.
        if let Some(hit) = self.cached(&key) {
            return hit;
        }
        self.upstream_calls.fetch_add(1, Ordering::SeqCst);
        let result = self.inner.lookup(&key);
        self.cache.write().unwrap_or_else(|e| e.into_inner()).insert(key, (Instant::now(), result.clone()));
        result
    }
}
