//! Phase 1: weighted deterministic rules over a parsed message.

mod ablation;
pub mod dns;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use crate::message::{registrable_domain, EmailMessage};
use crate::{Error, Result};

pub use ablation::{leave_one_out, rule_ablation, AblationReport, RuleStats};
pub use dns::{resolve_dns, CachingResolver, DnsError, DnsLookup, DnsRecordSet, DnsResolver, FixtureResolver, NullResolver, SpfStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleId {
    MissingMx,
    NoSpf,
    NoDmarc,
    SpfSoftfail,
    FreemailDomain,
    DomainMismatch,
    UrlShortener,
    IpLiteralLink,
    UrlObfuscation,
    UrgencyKeywords,
    CredentialRequest,
    GenericGreeting,
    LookalikeDomain,
    FreemailBrandClaim,
    StrictDmarcNoAlign,
}

impl RuleId {
    pub const ALL: [RuleId; 15] = [
        RuleId::MissingMx,
        RuleId::NoSpf,
        RuleId::NoDmarc,
        RuleId::SpfSoftfail,
        RuleId::FreemailDomain,
        RuleId::DomainMismatch,
        RuleId::UrlShortener,
        RuleId::IpLiteralLink,
        RuleId::UrlObfuscation,
        RuleId::UrgencyKeywords,
        RuleId::CredentialRequest,
        RuleId::GenericGreeting,
        RuleId::LookalikeDomain,
        RuleId::FreemailBrandClaim,
        RuleId::StrictDmarcNoAlign,
    ];

    /// The twelve rules enabled out of the box.
    pub const DEFAULT_ENABLED: [RuleId; 12] = [
        RuleId::MissingMx,
        RuleId::NoSpf,
        RuleId::NoDmarc,
        RuleId::SpfSoftfail,
        RuleId::FreemailDomain,
        RuleId::DomainMismatch,
        RuleId::UrlShortener,
        RuleId::IpLiteralLink,
        RuleId::UrlObfuscation,
        RuleId::UrgencyKeywords,
        RuleId::CredentialRequest,
        RuleId::GenericGreeting,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RuleId::MissingMx => "missing_mx",
            RuleId::NoSpf => "no_spf",
            RuleId::NoDmarc => "no_dmarc",
            RuleId::SpfSoftfail => "spf_softfail",
            RuleId::FreemailDomain => "freemail_domain",
            RuleId::DomainMismatch => "domain_mismatch",
            RuleId::UrlShortener => "url_shortener",
            RuleId::IpLiteralLink => "ip_literal_link",
            RuleId::UrlObfuscation => "url_obfuscation",
            RuleId::UrgencyKeywords => "urgency_keywords",
            RuleId::CredentialRequest => "credential_request",
            RuleId::GenericGreeting => "generic_greeting",
            RuleId::LookalikeDomain => "lookalike_domain",
            RuleId::FreemailBrandClaim => "freemail_brand_claim",
            RuleId::StrictDmarcNoAlign => "strict_dmarc_no_align",
        }
    }

    fn default_weight(self) -> u8 {
        match self {
            RuleId::MissingMx | RuleId::StrictDmarcNoAlign => 3,
            RuleId::SpfSoftfail
            | RuleId::FreemailDomain
            | RuleId::UrgencyKeywords
            | RuleId::GenericGreeting => 1,
            _ => 2,
        }
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RuleId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        RuleId::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::UnknownRuleId(s.to_string()))
    }
}

/// Three-way Phase 1 outcome, also used as the final cascade label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Benign,
    NeedsReview,
    Phishing,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Benign => "benign",
            Verdict::NeedsReview => "needs_review",
            Verdict::Phishing => "phishing",
        }
    }

    /// Maps a score onto the tiers `[0, benign_upper)`, `[benign_upper,
    /// phishing_lower)` and `[phishing_lower, ∞)`.
    pub fn from_score(score: u32, benign_upper: u32, phishing_lower: u32) -> Verdict {
        if score >= phishing_lower {
            Verdict::Phishing
        } else if score >= benign_upper {
            Verdict::NeedsReview
        } else {
            Verdict::Benign
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verdict {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "benign" => Ok(Verdict::Benign),
            "needs_review" | "review" => Ok(Verdict::NeedsReview),
            "phishing" => Ok(Verdict::Phishing),
            other => Err(Error::Config(format!("unknown verdict {other:?}"))),
        }
    }
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// Rule weights, tier thresholds and lexicons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleConfig {
    pub benign_upper: u32,
    pub phishing_lower: u32,
    pub enabled_rules: BTreeSet<RuleId>,
    /// Query parameter count above which a URL counts as obfuscated.
    pub max_query_params: usize,
    /// Largest edit distance to a brand domain still reported as a lookalike.
    pub lookalike_max_distance: usize,
    pub urgency_lexicon: Vec<String>,
    /// Case-insensitive regular expressions.
    pub credential_patterns: Vec<String>,
    pub greeting_patterns: Vec<String>,
    pub freemail_domains: Vec<String>,
    pub shortener_domains: Vec<String>,
    pub brand_domains: Vec<String>,
    /// Entries given in a config file override the defaults one by one.
    #[serde(deserialize_with = "overlay_weights")]
    pub weights: BTreeMap<RuleId, u8>,
}

fn default_weights() -> BTreeMap<RuleId, u8> {
    RuleId::ALL.into_iter().map(|r| (r, r.default_weight())).collect()
}

fn overlay_weights<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<BTreeMap<RuleId, u8>, D::Error> {
    let mut weights = default_weights();
    weights.extend(BTreeMap::<RuleId, u8>::deserialize(d)?);
    Ok(weights)
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig {
            benign_upper: 2,
            phishing_lower: 5,
            enabled_rules: RuleId::DEFAULT_ENABLED.into_iter().collect(),
            max_query_params: 8,
            lookalike_max_distance: 2,
            urgency_lexicon: strings(&[
                "urgent",
                "immediate action",
                "verify your account",
                "password expires",
                "suspend",
                "pay now",
                "update your information",
            ]),
            credential_patterns: strings(&[
                "password",
                r"\bssn\b",
                "social security",
                "credit card",
                r"log\s+in",
                "credentials",
            ]),
            greeting_patterns: strings(&["dear customer", "dear user", "valued member"]),
            freemail_domains: strings(&["gmail.com", "yahoo.com", "outlook.com", "hotmail.com", "aol.com", "proton.me"]),
            shortener_domains: strings(&["bit.ly", "tinyurl.com", "t.co", "goo.gl", "ow.ly", "buff.ly"]),
            brand_domains: strings(&[
                "paypal.com",
                "apple.com",
                "amazon.com",
                "microsoft.com",
                "google.com",
                "netflix.com",
                "chase.com",
                "wellsfargo.com",
                "bankofamerica.com",
                "irs.gov",
            ]),
            weights: default_weights(),
        }
    }
}

impl RuleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.benign_upper >= self.phishing_lower {
            return Err(Error::Config(format!(
                "benign_upper ({}) must be below phishing_lower ({})",
                self.benign_upper, self.phishing_lower
            )));
        }
        for (rule, w) in &self.weights {
            if !(1..=3).contains(w) {
                return Err(Error::Config(format!("weight for {rule} is {w}, expected 1, 2 or 3")));
            }
        }
        if let Some(rule) = self.enabled_rules.iter().find(|r| !self.weights.contains_key(r)) {
            return Err(Error::Config(format!("enabled rule {rule} has no weight")));
        }
        if self.max_query_params == 0 {
            return Err(Error::Config("max_query_params must be positive".into()));
        }
        compile_patterns(&self.credential_patterns)?;
        Ok(())
    }

    pub fn weight(&self, rule: RuleId) -> u32 {
        u32::from(self.weights.get(&rule).copied().unwrap_or(0))
    }

    pub fn is_enabled(&self, rule: RuleId) -> bool {
        self.enabled_rules.contains(&rule)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RuleConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Sum of enabled weights over fired flags.
    pub fn score(&self, flags: &BTreeMap<RuleId, bool>) -> u32 {
        flags
            .iter()
            .filter(|(r, &fired)| fired && self.is_enabled(**r))
            .map(|(r, _)| self.weight(*r))
            .sum()
    }

    pub fn verdict(&self, score: u32) -> Verdict {
        Verdict::from_score(score, self.benign_upper, self.phishing_lower)
    }
}

fn compile_patterns(patterns: &[String]) -> Result<Vec<Regex>> {
    patterns
        .iter()
        .map(|p| {
            RegexBuilder::new(p)
                .case_insensitive(true)
                .build()
                .map_err(|e| Error::Config(format!("credential pattern {p:?}: {e}")))
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndicatorSet {
    /// One entry per enabled rule.
    pub flags: BTreeMap<RuleId, bool>,
    /// Present exactly for the fired rules.
    pub evidence: BTreeMap<RuleId, String>,
}

impl IndicatorSet {
    pub fn fired(&self) -> impl Iterator<Item = RuleId> + '_ {
        self.flags.iter().filter(|(_, &f)| f).map(|(r, _)| *r)
    }

    pub fn is_fired(&self, rule: RuleId) -> bool {
        self.flags.get(&rule).copied().unwrap_or(false)
    }

    fn set(&mut self, rule: RuleId, evidence: Option<String>) {
        self.flags.insert(rule, evidence.is_some());
        if let Some(e) = evidence {
            self.evidence.insert(rule, e);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phase1Result {
    pub indicators: IndicatorSet,
    pub score: u32,
    pub verdict: Verdict,
}

/// A validated [`RuleConfig`] with its lexicons compiled.
#[derive(Debug, Clone)]
pub struct RuleEngine {
    cfg: RuleConfig,
    credential: Vec<(String, Regex)>,
    urgency: Vec<String>,
    greetings: Vec<String>,
    freemail: HashSet<String>,
    shorteners: HashSet<String>,
    brands: Vec<String>,
}

fn lower_all(items: &[String]) -> Vec<String> {
    items.iter().map(|s| s.trim().to_lowercase()).filter(|s| !s.is_empty()).collect()
}

fn domain_in(domain: &str, set: &HashSet<String>) -> bool {
    let mut d = domain;
    loop {
        if set.contains(d) {
            return true;
        }
        match d.find('.') {
            Some(i) => d = &d[i + 1..],
            None => return false,
        }
    }
}

fn summarize<I: IntoIterator<Item = String>>(items: I) -> String {
    let mut seen: Vec<String> = Vec::new();
    for item in items {
        if !seen.contains(&item) {
            seen.push(item);
        }
    }
    let extra = seen.len().saturating_sub(3);
    let mut s = seen.into_iter().take(3).collect::<Vec<_>>().join(", ");
    if extra > 0 {
        s.push_str(&format!(" (+{extra} more)"));
    }
    s
}

impl RuleEngine {
    pub fn new(cfg: RuleConfig) -> Result<Self> {
        cfg.validate()?;
        let credential = cfg
            .credential_patterns
            .iter()
            .cloned()
            .zip(compile_patterns(&cfg.credential_patterns)?)
            .collect();
        Ok(RuleEngine {
            urgency: lower_all(&cfg.urgency_lexicon),
            greetings: lower_all(&cfg.greeting_patterns),
            freemail: lower_all(&cfg.freemail_domains).into_iter().collect(),
            shorteners: lower_all(&cfg.shortener_domains).into_iter().collect(),
            brands: lower_all(&cfg.brand_domains),
            credential,
            cfg,
        })
    }

    pub fn config(&self) -> &RuleConfig {
        &self.cfg
    }

    /// Evaluates every enabled rule. Pure: the same inputs always give the
    /// same result.
    pub fn evaluate(&self, msg: &EmailMessage, dns: &DnsLookup) -> Phase1Result {
        let mut ind = IndicatorSet::default();
        let sender = msg.from_domain.to_ascii_lowercase();
        let sender_reg = registrable_domain(&sender);
        let content = msg.content_text().to_lowercase();
        let records = dns.records();

        for rule in self.cfg.enabled_rules.iter().copied() {
            let evidence = match rule {
                RuleId::MissingMx => records
                    .filter(|r| !r.has_mx)
                    .map(|_| format!("no MX record for {sender}")),
                RuleId::NoSpf => records
                    .filter(|r| r.spf == SpfStatus::None)
                    .map(|_| format!("no SPF policy for {sender}")),
                RuleId::NoDmarc => records
                    .filter(|r| !r.has_dmarc)
                    .map(|_| format!("no DMARC record for {sender}")),
                RuleId::SpfSoftfail => records
                    .filter(|r| r.spf == SpfStatus::Softfail)
                    .map(|_| format!("SPF policy for {sender} ends in ~all")),
                RuleId::FreemailDomain => (!sender.is_empty() && domain_in(&sender, &self.freemail))
                    .then(|| format!("sender uses free-mail domain {sender}")),
                RuleId::DomainMismatch => self.domain_mismatch(msg, sender_reg.as_deref()),
                RuleId::UrlShortener => {
                    let hits: Vec<String> = msg
                        .urls
                        .iter()
                        .filter(|u| domain_in(&u.host, &self.shorteners))
                        .map(|u| u.host.clone())
                        .collect();
                    (!hits.is_empty()).then(|| format!("shortened link via {}", summarize(hits)))
                }
                RuleId::IpLiteralLink => {
                    let hits: Vec<String> =
                        msg.urls.iter().filter(|u| u.is_ip_literal).map(|u| u.host.clone()).collect();
                    (!hits.is_empty()).then(|| format!("link to bare IP address {}", summarize(hits)))
                }
                RuleId::UrlObfuscation => {
                    let cap = self.cfg.max_query_params;
                    let hits: Vec<String> = msg
                        .urls
                        .iter()
                        .filter_map(|u| {
                            if u.percent_escape_count > 0 {
                                Some(format!("{} ({} percent escapes)", u.host, u.percent_escape_count))
                            } else if u.query_param_count > cap {
                                Some(format!("{} ({} query parameters)", u.host, u.query_param_count))
                            } else {
                                None
                            }
                        })
                        .collect();
                    (!hits.is_empty()).then(|| format!("obfuscated link {}", summarize(hits)))
                }
                RuleId::UrgencyKeywords => {
                    let hits: Vec<String> =
                        self.urgency.iter().filter(|t| content.contains(t.as_str())).cloned().collect();
                    (!hits.is_empty()).then(|| format!("urgency terms: {}", summarize(hits)))
                }
                RuleId::CredentialRequest => {
                    let hits: Vec<String> = self
                        .credential
                        .iter()
                        .filter(|(_, re)| re.is_match(&content))
                        .map(|(p, _)| p.clone())
                        .collect();
                    (!hits.is_empty()).then(|| format!("credential request patterns: {}", summarize(hits)))
                }
                RuleId::GenericGreeting => {
                    let hits: Vec<String> =
                        self.greetings.iter().filter(|g| content.contains(g.as_str())).cloned().collect();
                    (!hits.is_empty()).then(|| format!("generic greeting: {}", summarize(hits)))
                }
                RuleId::LookalikeDomain => self.lookalike(msg, sender_reg.as_deref()),
                RuleId::FreemailBrandClaim => self.freemail_brand_claim(msg, &sender),
                RuleId::StrictDmarcNoAlign => self.dmarc_misalignment(msg, records, sender_reg.as_deref()),
            };
            ind.set(rule, evidence);
        }

        let score = self.cfg.score(&ind.flags);
        Phase1Result { verdict: self.cfg.verdict(score), score, indicators: ind }
    }

    fn domain_mismatch(&self, msg: &EmailMessage, sender_reg: Option<&str>) -> Option<String> {
        let sender_reg = sender_reg?;
        let hits: Vec<String> = msg
            .urls
            .iter()
            .filter(|u| !u.is_ip_literal)
            .filter_map(|u| registrable_domain(&u.host))
            .filter(|d| d != sender_reg)
            .collect();
        (!hits.is_empty()).then(|| format!("links to {} while sender is {sender_reg}", summarize(hits)))
    }

    fn lookalike(&self, msg: &EmailMessage, sender_reg: Option<&str>) -> Option<String> {
        let max = self.cfg.lookalike_max_distance;
        let candidates = sender_reg
            .map(str::to_string)
            .into_iter()
            .chain(msg.urls.iter().filter(|u| !u.is_ip_literal).filter_map(|u| registrable_domain(&u.host)));
        let hits: Vec<String> = candidates
            .filter_map(|d| {
                self.brands
                    .iter()
                    .find(|b| **b != d && strsim::levenshtein(b, &d) <= max)
                    .map(|b| format!("{d} resembles {b}"))
            })
            .collect();
        (!hits.is_empty()).then(|| summarize(hits))
    }

    fn freemail_brand_claim(&self, msg: &EmailMessage, sender: &str) -> Option<String> {
        if sender.is_empty() || !domain_in(sender, &self.freemail) {
            return None;
        }
        let claim = format!("{} {}", msg.from_display_name().unwrap_or_default(), msg.subject).to_lowercase();
        self.brands
            .iter()
            .filter_map(|b| b.split('.').next())
            .filter(|label| label.len() >= 3)
            .find(|label| claim.contains(label))
            .map(|label| format!("free-mail sender {sender} claims brand {label}"))
    }

    fn dmarc_misalignment(
        &self,
        msg: &EmailMessage,
        records: Option<&DnsRecordSet>,
        sender_reg: Option<&str>,
    ) -> Option<String> {
        if !records?.has_dmarc {
            return None;
        }
        let sender_reg = sender_reg?;
        let envelope = msg.header("return-path").or_else(|| msg.header("sender"))?;
        let envelope_domain = crate::message::address_domain(&crate::message::parse_address(envelope));
        let envelope_reg = registrable_domain(&envelope_domain)?;
        (envelope_reg != sender_reg)
            .then(|| format!("envelope domain {envelope_reg} not aligned with {sender_reg}"))
    }
}

/// Compiles `cfg` and evaluates one message. Prefer [`RuleEngine`] when
/// scoring many messages.
pub fn run_rules(msg: &EmailMessage, dns: &DnsLookup, cfg: &RuleConfig) -> Result<Phase1Result> {
    Ok(RuleEngine::new(cfg.clone())?.evaluate(msg, dns))
}
