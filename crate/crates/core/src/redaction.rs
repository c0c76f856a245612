//! Masking of personal data before text leaves the trust boundary.
//!
//! Detection and masking share one engine, so exposure scans and
//! redaction counts always agree.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PiiKind {
    Email,
    Phone,
    Ssn,
    Cc,
    Dob,
}

impl PiiKind {
    pub const ALL: [PiiKind; 5] = [PiiKind::Email, PiiKind::Phone, PiiKind::Ssn, PiiKind::Cc, PiiKind::Dob];

    /// Order in which detectors run within one pass.
    const PASS_ORDER: [PiiKind; 5] = [PiiKind::Email, PiiKind::Dob, PiiKind::Cc, PiiKind::Ssn, PiiKind::Phone];

    pub fn as_str(self) -> &'static str {
        match self {
            PiiKind::Email => "email",
            PiiKind::Phone => "phone",
            PiiKind::Ssn => "ssn",
            PiiKind::Cc => "cc",
            PiiKind::Dob => "dob",
        }
    }
}

impl fmt::Display for PiiKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub type PiiCounts = BTreeMap<PiiKind, usize>;

fn zero_counts() -> PiiCounts {
    PiiKind::ALL.into_iter().map(|k| (k, 0)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedactionReport {
    pub redacted_text: String,
    pub counts: PiiCounts,
    pub any_redacted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExposureReport {
    pub exposure: bool,
    pub counts: PiiCounts,
}

struct Patterns {
    email: Regex,
    phone: Regex,
    ssn: Regex,
    cc: Regex,
    dob: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| Patterns {
        email: Regex::new(r"[A-Za-z0-9._%+\-]+@[A-Za-z0-9\-]+(?:\.[A-Za-z0-9\-]+)*\.[A-Za-z]{2,}").unwrap(),
        phone: Regex::new(r"(?:\+?1[\s.\-]?)?(?:\(\d{3}\)\s?|\d{3}[\s.\-]?)\d{3}[\s.\-]?\d{4}").unwrap(),
        ssn: Regex::new(r"\d{3}-\d{2}-\d{4}").unwrap(),
        cc: Regex::new(r"\d(?:[ \-]?\d){12,15}").unwrap(),
        dob: Regex::new(
            r"(?i)\b(?:\d{1,2}/\d{1,2}/\d{4}|\d{4}-\d{2}-\d{2}|(?:january|february|march|april|may|june|july|august|september|october|november|december|jan|feb|mar|apr|jun|jul|aug|sep|sept|oct|nov|dec)\.?\s+\d{1,2},\s*\d{4})\b",
        )
        .unwrap(),
    })
}

fn is_local_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || "._%+-".contains(c)
}

fn luhn_valid(digits: &[u32]) -> bool {
    let sum: u32 = digits
        .iter()
        .rev()
        .enumerate()
        .map(|(i, &d)| {
            if i % 2 == 1 {
                let x = d * 2;
                if x > 9 {
                    x - 9
                } else {
                    x
                }
            } else {
                d
            }
        })
        .sum();
    sum % 10 == 0
}

fn mask_email(m: &str) -> String {
    let (local, domain) = m.split_once('@').expect("email match contains @");
    let first = local.chars().next().unwrap_or('x');
    let last = local.chars().last().unwrap_or('x');
    format!("{first}****{last}@{domain}")
}

fn last_digits(m: &str, n: usize) -> String {
    let digits: Vec<char> = m.chars().filter(char::is_ascii_digit).collect();
    digits[digits.len().saturating_sub(n)..].iter().collect()
}

const DOB_CUES: [&str; 3] = ["birth", "dob", "born"];

/// Configurable detector set. [`Redactor::default`] enables every kind and
/// requires a valid Luhn checksum for card numbers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Redactor {
    pub enabled: BTreeSet<PiiKind>,
    pub luhn_check: bool,
}

impl Default for Redactor {
    fn default() -> Self {
        Redactor { enabled: PiiKind::ALL.into_iter().collect(), luhn_check: true }
    }
}

impl Redactor {
    /// Accepted matches of one detector as (start, end, mask).
    fn find(&self, kind: PiiKind, text: &str) -> Vec<(usize, usize, String)> {
        let p = patterns();
        let before = |i: usize| text[..i].chars().next_back();
        let after = |i: usize| text[i..].chars().next();
        let digit_bounded = |s: usize, e: usize| {
            !before(s).is_some_and(|c| c.is_ascii_digit()) && !after(e).is_some_and(|c| c.is_ascii_digit())
        };
        match kind {
            PiiKind::Email => p
                .email
                .find_iter(text)
                .filter(|m| !before(m.start()).is_some_and(|c| c == '*' || is_local_char(c)))
                .map(|m| (m.start(), m.end(), mask_email(m.as_str())))
                .collect(),
            PiiKind::Phone => p
                .phone
                .find_iter(text)
                .filter(|m| digit_bounded(m.start(), m.end()))
                .map(|m| (m.start(), m.end(), format!("***-***-{}", last_digits(m.as_str(), 4))))
                .collect(),
            PiiKind::Ssn => p
                .ssn
                .find_iter(text)
                .filter(|m| digit_bounded(m.start(), m.end()))
                .map(|m| (m.start(), m.end(), format!("***-**-{}", last_digits(m.as_str(), 4))))
                .collect(),
            PiiKind::Cc => p
                .cc
                .find_iter(text)
                .filter(|m| digit_bounded(m.start(), m.end()))
                .filter(|m| {
                    let digits: Vec<u32> = m.as_str().chars().filter_map(|c| c.to_digit(10)).collect();
                    (13..=16).contains(&digits.len()) && (!self.luhn_check || luhn_valid(&digits))
                })
                .map(|m| (m.start(), m.end(), "****-****".to_string()))
                .collect(),
            PiiKind::Dob => p
                .dob
                .find_iter(text)
                .filter(|m| {
                    let prefix: String = text[..m.start()].chars().rev().take(20).collect::<Vec<_>>().into_iter().rev().collect();
                    let prefix = prefix.to_lowercase();
                    DOB_CUES.iter().any(|cue| prefix.contains(cue))
                })
                .map(|m| (m.start(), m.end(), "[DOB]".to_string()))
                .collect(),
        }
    }

    /// Masks every enabled kind, repeating passes until nothing matches.
    pub fn redact(&self, text: &str) -> RedactionReport {
        let mut current = text.to_string();
        let mut counts = zero_counts();
        // Each pass masks at least one span and masks shrink digit and
        // local-part runs, so this settles quickly; the cap is a safeguard.
        for _ in 0..16 {
            let mut changed = false;
            for kind in PiiKind::PASS_ORDER {
                if !self.enabled.contains(&kind) {
                    continue;
                }
                let hits = self.find(kind, &current);
                if hits.is_empty() {
                    continue;
                }
                let mut out = String::with_capacity(current.len());
                let mut last = 0;
                for (s, e, mask) in &hits {
                    out.push_str(&current[last..*s]);
                    out.push_str(mask);
                    last = *e;
                }
                out.push_str(&current[last..]);
                if out != current {
                    changed = true;
                }
                *counts.get_mut(&kind).expect("all kinds present") += hits.len();
                current = out;
            }
            if !changed {
                break;
            }
        }
        let any_redacted = counts.values().any(|&c| c > 0);
        RedactionReport { redacted_text: current, counts, any_redacted }
    }

    pub fn scan_exposure(&self, text: &str) -> ExposureReport {
        let report = self.redact(text);
        ExposureReport { exposure: report.any_redacted, counts: report.counts }
    }
}

pub fn redact(text: &str) -> RedactionReport {
    Redactor::default().redact(text)
}

pub fn scan_exposure(text: &str) -> ExposureReport {
    Redactor::default().scan_exposure(text)
}

/// Redaction counts aggregated over a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiiStatistics {
    pub documents: usize,
    pub documents_with_pii: usize,
    pub exposure_rate: f64,
    pub totals: PiiCounts,
    /// Documents containing at least one match of each kind.
    pub documents_per_kind: PiiCounts,
}

pub fn pii_statistics<'a, I: IntoIterator<Item = &'a str>>(redactor: &Redactor, texts: I) -> PiiStatistics {
    let mut stats = PiiStatistics {
        documents: 0,
        documents_with_pii: 0,
        exposure_rate: 0.0,
        totals: zero_counts(),
        documents_per_kind: zero_counts(),
    };
    for text in texts {
        let r = redactor.scan_exposure(text);
        stats.documents += 1;
        stats.documents_with_pii += usize::from(r.exposure);
        for (k, c) in r.counts {
            *stats.totals.get_mut(&k).expect("all kinds present") += c;
            *stats.documents_per_kind.get_mut(&k).expect("all kinds present") += usize::from(c > 0);
        }
    }
    if stats.documents > 0 {
        stats.exposure_rate = stats.documents_with_pii as f64 / stats.documents as f64;
    }
    stats
}
