//! Tagged explanation bullets and the groundedness checker.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::decision::FinalDecision;
use crate::ontology::{AttackMatch, ReasoningChain};
use crate::retrieval::{similarity_stats, NeighborSet};
use crate::rules::{Phase1Result, RuleId};
use crate::textgen::TextGenProvider;
use crate::{Error, Result};

pub const MAX_BULLETS: usize = 5;
pub const MAX_WORDS: usize = 40;
/// Tolerance when matching a cited similarity against retrieved neighbors.
pub const SIMILARITY_TOLERANCE: f64 = 0.005;

pub const SYSTEM_PROMPT: &str = include_str!("../assets/prompts/system.txt");
pub const USER_PROMPT: &str = include_str!("../assets/prompts/user.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Tag {
    Auth,
    Url,
    Urgency,
    Content,
    Similarity,
    Ontology,
}

impl Tag {
    pub const ALL: [Tag; 6] = [Tag::Auth, Tag::Url, Tag::Urgency, Tag::Content, Tag::Similarity, Tag::Ontology];

    pub fn as_str(self) -> &'static str {
        match self {
            Tag::Auth => "AUTH",
            Tag::Url => "URL",
            Tag::Urgency => "URGENCY",
            Tag::Content => "CONTENT",
            Tag::Similarity => "SIMILARITY",
            Tag::Ontology => "ONTOLOGY",
        }
    }

    pub fn parse(s: &str) -> Option<Tag> {
        Tag::ALL.into_iter().find(|t| t.as_str().eq_ignore_ascii_case(s))
    }

    /// Tag under which a rule's evidence is reported.
    pub fn of_rule(rule: RuleId) -> Tag {
        match rule {
            RuleId::UrlShortener | RuleId::IpLiteralLink | RuleId::UrlObfuscation => Tag::Url,
            RuleId::UrgencyKeywords => Tag::Urgency,
            RuleId::CredentialRequest | RuleId::GenericGreeting => Tag::Content,
            _ => Tag::Auth,
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn rule_phrase(rule: RuleId) -> &'static str {
    match rule {
        RuleId::MissingMx => "no MX record",
        RuleId::NoSpf => "no SPF record",
        RuleId::NoDmarc => "no DMARC record",
        RuleId::SpfSoftfail => "SPF softfail policy",
        RuleId::FreemailDomain => "free webmail sender",
        RuleId::DomainMismatch => "links to a different domain",
        RuleId::UrlShortener => "shortened link",
        RuleId::IpLiteralLink => "link to a raw IP address",
        RuleId::UrlObfuscation => "obfuscated link",
        RuleId::UrgencyKeywords => "urgent or threatening language",
        RuleId::CredentialRequest => "request for credentials or account details",
        RuleId::GenericGreeting => "generic greeting",
        RuleId::LookalikeDomain => "lookalike of a known brand domain",
        RuleId::FreemailBrandClaim => "brand name sent from free webmail",
        RuleId::StrictDmarcNoAlign => "envelope domain not aligned with sender",
    }
}

/// Structured reference to pipeline evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Citation {
    Rules { rules: Vec<RuleId> },
    Neighbor { id: String, similarity: f64 },
    Attack { attack: String, properties: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationBullet {
    pub tag: Tag,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub citation: Option<Citation>,
}

impl fmt::Display for ExplanationBullet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.tag, self.text)
    }
}

pub fn word_count(s: &str) -> usize {
    s.split_whitespace().count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplanationSource {
    Offline,
    Provider,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub bullets: Vec<ExplanationBullet>,
    pub source: ExplanationSource,
    /// Why provider output was discarded, when it was.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_reason: Option<String>,
}

/// Everything the explainer sees for one email.
#[derive(Debug, Clone, Copy)]
pub struct ExplanationContext<'a> {
    pub phase1: &'a Phase1Result,
    pub matches: &'a [AttackMatch],
    pub chain: &'a ReasoningChain,
    pub neighbors: &'a NeighborSet,
    pub decision: &'a FinalDecision,
    /// Redacted subject and body.
    pub redacted_content: &'a str,
}

/// 1.00 -> "1.0", 0.50 -> "0.5", 0.333 -> "0.33"
fn short_decimal(x: f64) -> String {
    let s = format!("{x:.2}");
    let s = s.trim_end_matches('0');
    if s.ends_with('.') {
        format!("{s}0")
    } else {
        s.to_string()
    }
}

/// One bullet per evidence class present, strongest first, at most five.
pub fn offline_explanations(ctx: &ExplanationContext<'_>) -> Vec<ExplanationBullet> {
    let mut scored: Vec<(f64, ExplanationBullet)> = Vec::new();
    let mut by_tag: BTreeMap<Tag, Vec<RuleId>> = BTreeMap::new();
    for r in ctx.phase1.indicators.fired() {
        by_tag.entry(Tag::of_rule(r)).or_default().push(r);
    }
    for (tag, rules) in by_tag {
        let lead = match tag {
            Tag::Auth => "Sender checks failed",
            Tag::Url => "Suspicious links",
            Tag::Urgency => "Pressure tactics",
            _ => "Content cues",
        };
        let phrases: Vec<&str> = rules.iter().map(|r| rule_phrase(*r)).collect();
        let strength = rules.len() as f64 * 2.0;
        scored.push((
            strength,
            ExplanationBullet {
                tag,
                text: format!("{lead}: {}.", phrases.join(", ")),
                citation: Some(Citation::Rules { rules }),
            },
        ));
    }

    if let Some(top) = ctx.neighbors.hits.iter().max_by(|a, b| a.similarity.total_cmp(&b.similarity)) {
        let stats = similarity_stats(ctx.neighbors);
        scored.push((
            10.0 * top.similarity,
            ExplanationBullet {
                tag: Tag::Similarity,
                text: format!(
                    "Resembles known phishing: top similarity {:.2}, mean of top three {:.2}.",
                    top.similarity, stats.s_avg
                ),
                citation: Some(Citation::Neighbor { id: top.id.clone(), similarity: top.similarity }),
            },
        ));
    }

    if let Some(m) = ctx.matches.first() {
        let properties: Vec<String> =
            ctx.chain.steps.iter().filter(|s| s.attack == m.attack).map(|s| s.property.clone()).collect();
        let mut text = format!("Matches {}, c={}", m.attack, short_decimal(m.confidence_f64()));
        if !properties.is_empty() {
            text.push_str(&format!(", via {}", properties.join(", ")));
        }
        text.push('.');
        scored.push((10.0 * m.confidence_f64(), ExplanationBullet { tag: Tag::Ontology, text, citation: Some(Citation::Attack { attack: m.attack.clone(), properties }) }));
    }

    if scored.is_empty() {
        return vec![ExplanationBullet {
            tag: Tag::Content,
            text: "No rule fired and no similar known phishing was found.".into(),
            citation: None,
        }];
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.tag.cmp(&b.1.tag)));
    scored.truncate(MAX_BULLETS);
    let mut out: Vec<ExplanationBullet> = scored.into_iter().map(|(_, b)| b).collect();
    for b in &mut out {
        clamp_words(&mut b.text);
    }
    out
}

fn clamp_words(text: &mut String) {
    if word_count(text) > MAX_WORDS {
        *text = text.split_whitespace().take(MAX_WORDS).collect::<Vec<_>>().join(" ");
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ValidationError {
    #[error("no bullets")]
    Empty,
    #[error("line {0} has no recognized tag")]
    BadTag(usize),
    #[error("line {0} exceeds {MAX_WORDS} words")]
    TooLong(usize),
    #[error("line {0} has no text")]
    EmptyText(usize),
}

static TAGGED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(?:[-*•]|\d+[.)])?\s*\[([A-Za-z]+)\]\s*(.*)$").unwrap());

/// Parses provider output into bullets. Blank lines are skipped; more than
/// five bullets are truncated.
pub fn validate_bullets(output: &str) -> std::result::Result<Vec<ExplanationBullet>, ValidationError> {
    let mut out = Vec::new();
    for (i, line) in output.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let caps = TAGGED.captures(line).ok_or(ValidationError::BadTag(i + 1))?;
        let tag = Tag::parse(&caps[1]).ok_or(ValidationError::BadTag(i + 1))?;
        let text = caps[2].trim().to_string();
        if text.is_empty() {
            return Err(ValidationError::EmptyText(i + 1));
        }
        if word_count(&text) > MAX_WORDS {
            return Err(ValidationError::TooLong(i + 1));
        }
        out.push(ExplanationBullet { tag, text, citation: None });
    }
    if out.is_empty() {
        return Err(ValidationError::Empty);
    }
    out.truncate(MAX_BULLETS);
    Ok(out)
}

/// User prompt for provider mode. Contains only redacted content, fired
/// indicators, attack types and neighbor snippets.
pub fn render_prompt(ctx: &ExplanationContext<'_>, with_ontology: bool) -> String {
    let list = |items: Vec<String>| if items.is_empty() { "- none".to_string() } else { items.join("\n") };
    let indicators = list(ctx.phase1.indicators.fired().map(|r| format!("- {} ({})", r.as_str(), rule_phrase(r))).collect());
    let attack_types = if with_ontology {
        list(ctx.matches.iter().map(|m| format!("- {} (c={})", m.attack, short_decimal(m.confidence_f64()))).collect())
    } else {
        "- not provided".to_string()
    };
    let neighbors = list(
        ctx.neighbors.hits.iter().take(3).map(|n| format!("- similarity {:.2}: {}", n.similarity, n.snippet)).collect(),
    );
    USER_PROMPT
        .replace("{verdict}", ctx.decision.verdict.as_str())
        .replace("{display_score}", &format!("{:.1}", ctx.decision.display_score))
        .replace("{indicators}", &indicators)
        .replace("{attack_types}", &attack_types)
        .replace("{neighbors}", &neighbors)
        .replace("{content}", ctx.redacted_content)
}

/// Offline bullets, or provider bullets when a provider is given and its
/// output validates. Never fails.
pub fn generate_explanations(
    ctx: &ExplanationContext<'_>,
    provider: Option<&dyn TextGenProvider>,
    with_ontology: bool,
) -> Explanation {
    let offline = |reason: Option<String>| {
        let mut bullets = offline_explanations(ctx);
        if !with_ontology {
            bullets.retain(|b| b.tag != Tag::Ontology);
        }
        if bullets.is_empty() {
            bullets = offline_explanations(&ExplanationContext { matches: &[], ..*ctx });
        }
        Explanation { bullets, source: ExplanationSource::Offline, fallback_reason: reason }
    };
    let Some(p) = provider else {
        return offline(None);
    };
    let prompt = format!("{SYSTEM_PROMPT}\n{}", render_prompt(ctx, with_ontology));
    match p.generate(&prompt, 400) {
        Ok(g) => match validate_bullets(&g.text) {
            Ok(bullets) => Explanation { bullets, source: ExplanationSource::Provider, fallback_reason: None },
            Err(e) => offline(Some(format!("invalid provider output: {e}"))),
        },
        Err(e) => offline(Some(e.to_string())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum GroundednessStatus {
    Supported,
    Unsupported,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundednessVerdict {
    pub tag: Tag,
    pub status: GroundednessStatus,
    pub reason: String,
}

static DECIMAL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?:^|[^\d.])([01]?\.\d+)").unwrap());
static CAMEL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b([A-Z][a-z0-9]+(?:[A-Z][A-Za-z0-9]*)+)\b").unwrap());
static PROPERTY: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(has[A-Z][A-Za-z0-9]*)\b").unwrap());

/// Rules named in free text by id or description.
fn rules_in_text(text: &str) -> Vec<RuleId> {
    let lower = text.to_lowercase();
    RuleId::ALL
        .into_iter()
        .filter(|r| lower.contains(r.as_str()) || lower.contains(&rule_phrase(*r).to_lowercase()))
        .collect()
}

fn citation_of(b: &ExplanationBullet) -> Option<Citation> {
    if let Some(c) = &b.citation {
        return Some(c.clone());
    }
    match b.tag {
        Tag::Similarity => DECIMAL
            .captures_iter(&b.text)
            .filter_map(|c| c[1].parse::<f64>().ok())
            .find(|x| (0.0..=1.0).contains(x))
            .map(|similarity| Citation::Neighbor { id: String::new(), similarity }),
        Tag::Ontology => {
            let attack = CAMEL.captures_iter(&b.text).map(|c| c[1].to_string()).find(|w| !w.starts_with("has"))?;
            let properties = PROPERTY.captures_iter(&b.text).map(|c| c[1].to_string()).collect();
            Some(Citation::Attack { attack, properties })
        }
        _ => {
            let rules = rules_in_text(&b.text);
            (!rules.is_empty()).then_some(Citation::Rules { rules })
        }
    }
}

pub fn check_bullet(
    b: &ExplanationBullet,
    phase1: &Phase1Result,
    chain: &ReasoningChain,
    neighbors: &NeighborSet,
) -> GroundednessVerdict {
    let verdict = |status, reason: String| GroundednessVerdict { tag: b.tag, status, reason };
    match citation_of(b) {
        None => verdict(GroundednessStatus::Unknown, "no checkable citation".into()),
        Some(Citation::Rules { rules }) => match rules.iter().find(|r| !phase1.indicators.is_fired(**r)) {
            Some(r) => verdict(GroundednessStatus::Unsupported, format!("{} did not fire", r.as_str())),
            None => verdict(GroundednessStatus::Supported, "cited rules fired".into()),
        },
        Some(Citation::Neighbor { similarity, .. }) => {
            if neighbors.hits.iter().any(|n| (n.similarity - similarity).abs() <= SIMILARITY_TOLERANCE) {
                verdict(GroundednessStatus::Supported, format!("similarity {similarity:.3} matches a neighbor"))
            } else {
                verdict(GroundednessStatus::Unsupported, format!("no neighbor near similarity {similarity:.3}"))
            }
        }
        Some(Citation::Attack { attack, properties }) => {
            let chain_props: BTreeSet<&str> =
                chain.steps.iter().filter(|s| s.attack == attack).map(|s| s.property.as_str()).collect();
            if chain_props.is_empty() {
                verdict(GroundednessStatus::Unsupported, format!("{attack} was not inferred"))
            } else if let Some(p) = properties.iter().find(|p| !chain_props.contains(p.as_str())) {
                verdict(GroundednessStatus::Unsupported, format!("{p} is not in the chain for {attack}"))
            } else {
                verdict(GroundednessStatus::Supported, format!("{attack} and its properties are in the chain"))
            }
        }
    }
}

/// One verdict per bullet, in bullet order. Each verdict depends only on
/// its own bullet.
pub fn check_groundedness(
    bullets: &[ExplanationBullet],
    phase1: &Phase1Result,
    chain: &ReasoningChain,
    neighbors: &NeighborSet,
) -> Vec<GroundednessVerdict> {
    bullets.iter().map(|b| check_bullet(b, phase1, chain, neighbors)).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TagSupport {
    pub tag: Option<Tag>,
    pub total: usize,
    pub supported: usize,
    pub unsupported: usize,
    pub unknown: usize,
    /// supported / total, 0 when total is 0.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundednessReport {
    pub with_ontology: bool,
    pub sample: usize,
    pub rows: Vec<TagSupport>,
    pub overall: TagSupport,
    pub fallbacks: usize,
}

fn tally(row: &mut TagSupport, s: GroundednessStatus) {
    row.total += 1;
    match s {
        GroundednessStatus::Supported => row.supported += 1,
        GroundednessStatus::Unsupported => row.unsupported += 1,
        GroundednessStatus::Unknown => row.unknown += 1,
    }
    row.rate = row.supported as f64 / row.total as f64;
}

/// Per-tag support rates over a sample, with or without ontology context.
pub fn groundedness_ab_report(
    sample: &[ExplanationContext<'_>],
    provider: Option<&dyn TextGenProvider>,
    with_ontology: bool,
) -> Result<GroundednessReport> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut rows: BTreeMap<Tag, TagSupport> =
        Tag::ALL.into_iter().map(|t| (t, TagSupport { tag: Some(t), ..Default::default() })).collect();
    let mut overall = TagSupport::default();
    let mut fallbacks = 0;
    for ctx in sample {
        let exp = generate_explanations(ctx, provider, with_ontology);
        fallbacks += usize::from(exp.fallback_reason.is_some());
        for v in check_groundedness(&exp.bullets, ctx.phase1, ctx.chain, ctx.neighbors) {
            tally(rows.get_mut(&v.tag).expect("all tags present"), v.status);
            tally(&mut overall, v.status);
        }
    }
    Ok(GroundednessReport { with_ontology, sample: sample.len(), rows: rows.into_values().collect(), overall, fallbacks })
}

pub fn render_groundedness_table(r: &GroundednessReport) -> String {
    let mut s = format!(
        "ontology context: {}\n{:<11} {:>6} {:>10} {:>7}\n",
        if r.with_ontology { "on" } else { "off" },
        "tag",
        "total",
        "supported",
        "rate"
    );
    for row in r.rows.iter().chain(std::iter::once(&r.overall)) {
        let name = row.tag.map_or("ALL", Tag::as_str);
        s.push_str(&format!("{:<11} {:>6} {:>10} {:>6.1}%\n", name, row.total, row.supported, row.rate * 100.0));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::{cascade, CascadeConfig};
    use crate::ontology::{classify_attacks, generate_chain, map_properties, OntologyConfig};
    use crate::retrieval::Neighbor;
    use crate::rules::{IndicatorSet, Verdict};
    use crate::textgen::{Generation, TextGenError};
    use proptest::prelude::*;

    struct Fixture {
        phase1: Phase1Result,
        matches: Vec<AttackMatch>,
        chain: ReasoningChain,
        neighbors: NeighborSet,
        decision: FinalDecision,
    }

    impl Fixture {
        fn new(fired: &[RuleId], sims: &[f64]) -> Self {
            let mut indicators = IndicatorSet::default();
            for r in RuleId::ALL {
                indicators.flags.insert(r, fired.contains(&r));
            }
            let phase1 = Phase1Result { indicators, score: 3, verdict: Verdict::NeedsReview };
            let cfg = OntologyConfig::default();
            let props = map_properties(&phase1.indicators, &cfg);
            let matches = classify_attacks(&props, &cfg);
            let chain = generate_chain(&props, &matches, &cfg).unwrap();
            let neighbors = NeighborSet {
                hits: sims
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| Neighbor { id: format!("n{i}"), similarity: s, snippet: "[EMAIL] verify".into() })
                    .collect(),
            };
            let decision = cascade(phase1.verdict, &similarity_stats(&neighbors), &CascadeConfig::default());
            Fixture { phase1, matches, chain, neighbors, decision }
        }

        fn ctx(&self) -> ExplanationContext<'_> {
            ExplanationContext {
                phase1: &self.phase1,
                matches: &self.matches,
                chain: &self.chain,
                neighbors: &self.neighbors,
                decision: &self.decision,
                redacted_content: "Dear customer, verify at [EMAIL]",
            }
        }
    }

    #[test]
    fn auth_similarity_ontology() {
        let f = Fixture::new(&[RuleId::MissingMx, RuleId::CredentialRequest], &[0.62, 0.5]);
        let bullets = offline_explanations(&f.ctx());
        let tags: BTreeSet<Tag> = bullets.iter().map(|b| b.tag).collect();
        assert!(tags.contains(&Tag::Auth) && tags.contains(&Tag::Similarity) && tags.contains(&Tag::Ontology));
        let sim = bullets.iter().find(|b| b.tag == Tag::Similarity).unwrap();
        assert!(sim.text.contains("top similarity 0.62"), "{}", sim.text);
        let onto = bullets.iter().find(|b| b.tag == Tag::Ontology).unwrap();
        assert!(onto.text.contains("CredentialTheft, c=1.0"), "{}", onto.text);
        assert!(check_groundedness(&bullets, &f.phase1, &f.chain, &f.neighbors)
            .iter()
            .all(|v| v.status == GroundednessStatus::Supported));
    }

    #[test]
    fn no_evidence() {
        let f = Fixture::new(&[], &[]);
        let b = offline_explanations(&f.ctx());
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].tag, Tag::Content);
        assert_eq!(check_bullet(&b[0], &f.phase1, &f.chain, &f.neighbors).status, GroundednessStatus::Unknown);
    }

    #[test]
    fn free_text_checks() {
        let f = Fixture::new(&[RuleId::UrlShortener, RuleId::CredentialRequest, RuleId::MissingMx], &[0.41]);
        let check = |line: &str| {
            let b = &validate_bullets(line).unwrap()[0];
            check_bullet(b, &f.phase1, &f.chain, &f.neighbors).status
        };
        assert_eq!(check("[URL] link looks suspicious"), GroundednessStatus::Unknown);
        assert_eq!(check("[URL] uses a shortened link"), GroundednessStatus::Supported);
        assert_eq!(check("[URL] contains a link to a raw IP address"), GroundednessStatus::Unsupported);
        assert_eq!(check("[SIMILARITY] similarity 0.41 to a known campaign"), GroundednessStatus::Supported);
        assert_eq!(check("[SIMILARITY] similarity .90 to a known campaign"), GroundednessStatus::Unsupported);
        assert_eq!(check("[ONTOLOGY] CredentialTheft via hasCredentialRequest"), GroundednessStatus::Supported);
        assert_eq!(check("[ONTOLOGY] InvoiceFraud suspected"), GroundednessStatus::Unsupported);
        assert_eq!(check("[ONTOLOGY] CredentialTheft via hasURLShortener"), GroundednessStatus::Unsupported);
    }

    struct Canned(String);
    impl TextGenProvider for Canned {
        fn id(&self) -> &str {
            "canned"
        }
        fn generate(&self, _: &str, _: u32) -> std::result::Result<Generation, TextGenError> {
            Ok(Generation { text: self.0.clone(), prompt_tokens: None, completion_tokens: None })
        }
    }

    #[test]
    fn provider_mode() {
        let f = Fixture::new(&[RuleId::MissingMx], &[0.3]);
        let seven = (0..7).map(|i| format!("- [AUTH] point {i}")).collect::<Vec<_>>().join("\n");
        let e = generate_explanations(&f.ctx(), Some(&Canned(seven)), true);
        assert_eq!((e.source, e.bullets.len()), (ExplanationSource::Provider, 5));

        let bad = generate_explanations(&f.ctx(), Some(&Canned("[WHATEVER] hmm".into())), true);
        assert_eq!(bad.source, ExplanationSource::Offline);
        assert!(bad.fallback_reason.is_some());

        let long = format!("[AUTH] {}", vec!["word"; 41].join(" "));
        assert_eq!(validate_bullets(&long), Err(ValidationError::TooLong(1)));
        assert_eq!(validate_bullets("\n\n"), Err(ValidationError::Empty));
    }

    #[test]
    fn prompt_excludes_raw_content_fields() {
        let f = Fixture::new(&[RuleId::MissingMx, RuleId::CredentialRequest], &[0.6]);
        let p = render_prompt(&f.ctx(), true);
        assert!(p.contains("missing_mx") && p.contains("CredentialTheft") && p.contains("[EMAIL]"));
        assert!(!render_prompt(&f.ctx(), false).contains("CredentialTheft"));
    }

    #[test]
    fn ab_report() {
        let a = Fixture::new(&[RuleId::MissingMx, RuleId::CredentialRequest], &[0.62, 0.5]);
        let b = Fixture::new(&[RuleId::UrgencyKeywords, RuleId::UrlShortener], &[0.2]);
        let sample = [a.ctx(), b.ctx()];
        let on = groundedness_ab_report(&sample, None, true).unwrap();
        let row = |r: &GroundednessReport, t: Tag| r.rows.iter().find(|x| x.tag == Some(t)).unwrap().clone();
        assert_eq!(row(&on, Tag::Similarity).rate, 1.0);
        assert_eq!(row(&on, Tag::Ontology).rate, 1.0);
        let off = groundedness_ab_report(&sample, None, false).unwrap();
        assert_eq!(row(&off, Tag::Ontology).total, 0);
        assert!(render_groundedness_table(&off).contains("ONTOLOGY"));
        assert!(matches!(groundedness_ab_report(&[], None, true), Err(Error::EmptySample)));
    }

    proptest! {
        #[test]
        fn offline_never_unsupported(mask in 0u32..(1 << 15), sims in prop::collection::vec(0.0f64..1.0, 0..6)) {
            let fired: Vec<RuleId> = RuleId::ALL.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, r)| *r).collect();
            let mut sims = sims;
            sims.sort_by(|a, b| b.total_cmp(a));
            let f = Fixture::new(&fired, &sims);
            let bullets = offline_explanations(&f.ctx());
            prop_assert!(!bullets.is_empty() && bullets.len() <= MAX_BULLETS);
            for b in &bullets {
                prop_assert!(word_count(&b.text) <= MAX_WORDS);
                prop_assert!(validate_bullets(&b.to_string()).is_ok());
            }
            let verdicts = check_groundedness(&bullets, &f.phase1, &f.chain, &f.neighbors);
            prop_assert!(verdicts.iter().all(|v| v.status != GroundednessStatus::Unsupported));
            let mut rev = bullets.clone();
            rev.reverse();
            let mut back = check_groundedness(&rev, &f.phase1, &f.chain, &f.neighbors);
            back.reverse();
            prop_assert_eq!(back, verdicts);
        }
    }
}
