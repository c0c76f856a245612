//! Reproducibility manifest embedded in every report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of a value's canonical JSON form.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("config serializes"))
}

/// `SOURCE_DATE_EPOCH` as RFC 3339, or None when unset or invalid.
pub fn source_date() -> Option<String> {
    let secs: i64 = std::env::var("SOURCE_DATE_EPOCH").ok()?.trim().parse().ok()?;
    OffsetDateTime::from_unix_timestamp(secs).ok()?.format(&Rfc3339).ok()
}

/// Current UTC time as RFC 3339.
pub fn now_rfc3339() -> String {
    OffsetDateTime::now_utc().format(&Rfc3339).expect("rfc3339 formats")
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config_hashes: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
    pub providers: BTreeMap<String, String>,
    pub dataset_digests: BTreeMap<String, String>,
    /// Taken from `SOURCE_DATE_EPOCH` so that reruns stay byte-identical.
    pub timestamp: Option<String>,
}

impl RunManifest {
    pub fn new(command: impl Into<String>) -> Self {
        RunManifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: source_date(),
            ..Default::default()
        }
    }

    pub fn config<T: Serialize>(mut self, name: &str, value: &T) -> Self {
        self.config_hashes.insert(name.into(), config_hash(value));
        self
    }

    pub fn seed(mut self, name: &str, seed: u64) -> Self {
        self.seeds.insert(name.into(), seed);
        self
    }

    pub fn provider(mut self, role: &str, id: &str) -> Self {
        self.providers.insert(role.into(), id.into());
        self
    }

    pub fn dataset(mut self, name: &str, bytes: &[u8]) -> Self {
        self.dataset_digests.insert(name.into(), sha256_hex(bytes));
        self
    }
}
