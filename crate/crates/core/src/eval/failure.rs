use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::metrics::PositiveMapping;
use crate::message::Label;
use crate::rules::{DnsLookup, Phase1Result, RuleId, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FailureKind {
    Fn,
    Fp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureCategory {
    ZeroScore,
    NoUrls,
    LegitimateDns,
    BelowThreshold,
    LowSignalContent,
    MultipleFactors,
    MultipleWeakSignals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureCase {
    pub id: String,
    pub kind: FailureKind,
    pub category: FailureCategory,
}

/// One pipeline outcome with the evidence the taxonomy needs.
#[derive(Debug, Clone)]
pub struct FailureInput<'a> {
    pub id: &'a str,
    pub label: Label,
    pub verdict: Verdict,
    pub phase1: &'a Phase1Result,
    pub dns: &'a DnsLookup,
    pub has_urls: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureSummaryRow {
    pub kind: FailureKind,
    pub category: FailureCategory,
    pub count: usize,
    /// Share of failures of this kind.
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureReport {
    pub cases: Vec<FailureCase>,
    pub summary: Vec<FailureSummaryRow>,
}

pub fn categorize_fn(input: &FailureInput<'_>, benign_upper: u32) -> FailureCategory {
    let p1 = input.phase1;
    if p1.indicators.fired().next().is_none() {
        FailureCategory::ZeroScore
    } else if !input.has_urls {
        FailureCategory::NoUrls
    } else if matches!(input.dns, DnsLookup::Known { records } if records.is_fully_authenticated()) {
        FailureCategory::LegitimateDns
    } else if p1.score > 0 && p1.score < benign_upper {
        FailureCategory::BelowThreshold
    } else if !p1.indicators.is_fired(RuleId::UrgencyKeywords) && !p1.indicators.is_fired(RuleId::CredentialRequest) {
        FailureCategory::LowSignalContent
    } else {
        FailureCategory::MultipleFactors
    }
}

/// Assigns each misclassification exactly one category. Correct
/// predictions are skipped.
pub fn failure_taxonomy(results: &[FailureInput<'_>], mapping: PositiveMapping, benign_upper: u32) -> FailureReport {
    let mut cases = Vec::new();
    for r in results {
        let flagged = mapping.is_positive(r.verdict);
        let case = match (r.label, flagged) {
            (Label::Phishing, false) => Some((FailureKind::Fn, categorize_fn(r, benign_upper))),
            (Label::Benign, true) => Some((FailureKind::Fp, FailureCategory::MultipleWeakSignals)),
            _ => None,
        };
        if let Some((kind, category)) = case {
            cases.push(FailureCase { id: r.id.to_string(), kind, category });
        }
    }
    let mut counts: BTreeMap<(FailureKind, FailureCategory), usize> = BTreeMap::new();
    let mut per_kind: BTreeMap<FailureKind, usize> = BTreeMap::new();
    for c in &cases {
        *counts.entry((c.kind, c.category)).or_default() += 1;
        *per_kind.entry(c.kind).or_default() += 1;
    }
    let summary = counts
        .into_iter()
        .map(|((kind, category), count)| FailureSummaryRow {
            kind,
            category,
            count,
            share: count as f64 / per_kind[&kind] as f64,
        })
        .collect();
    FailureReport { cases, summary }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::{DnsRecordSet, IndicatorSet, SpfStatus};

    fn p1(fired: &[RuleId], score: u32) -> Phase1Result {
        let mut indicators = IndicatorSet::default();
        for r in fired {
            indicators.flags.insert(*r, true);
        }
        Phase1Result { indicators, score, verdict: Verdict::from_score(score, 2, 5) }
    }

    fn input<'a>(label: Label, verdict: Verdict, phase1: &'a Phase1Result, dns: &'a DnsLookup, urls: bool) -> FailureInput<'a> {
        FailureInput { id: "x", label, verdict, phase1, dns, has_urls: urls }
    }

    #[test]
    fn precedence() {
        let unknown = DnsLookup::Unknown;
        let clean = DnsLookup::Known { records: DnsRecordSet { has_mx: true, spf: SpfStatus::PassPolicy, has_dmarc: true } };
        let zero = p1(&[], 0);
        assert_eq!(categorize_fn(&input(Label::Phishing, Verdict::Benign, &zero, &clean, false), 2), FailureCategory::ZeroScore);
        let one = p1(&[RuleId::UrgencyKeywords], 1);
        assert_eq!(categorize_fn(&input(Label::Phishing, Verdict::Benign, &one, &unknown, false), 2), FailureCategory::NoUrls);
        assert_eq!(categorize_fn(&input(Label::Phishing, Verdict::Benign, &one, &clean, true), 2), FailureCategory::LegitimateDns);
        assert_eq!(categorize_fn(&input(Label::Phishing, Verdict::Benign, &one, &unknown, true), 2), FailureCategory::BelowThreshold);
        let short = p1(&[RuleId::UrlShortener], 2);
        assert_eq!(categorize_fn(&input(Label::Phishing, Verdict::NeedsReview, &short, &unknown, true), 2), FailureCategory::LowSignalContent);
        let cred = p1(&[RuleId::UrlShortener, RuleId::CredentialRequest], 4);
        assert_eq!(categorize_fn(&input(Label::Phishing, Verdict::NeedsReview, &cred, &unknown, true), 2), FailureCategory::MultipleFactors);
    }

    #[test]
    fn weak_signal_false_positive() {
        let weak = p1(&[RuleId::UrgencyKeywords, RuleId::GenericGreeting, RuleId::SpfSoftfail], 3);
        let dns = DnsLookup::Unknown;
        let items = [
            input(Label::Benign, Verdict::Phishing, &weak, &dns, true),
            input(Label::Benign, Verdict::Benign, &weak, &dns, true),
            input(Label::Phishing, Verdict::Phishing, &weak, &dns, true),
        ];
        let r = failure_taxonomy(&items, PositiveMapping::Strict, 2);
        assert_eq!(r.cases.len(), 1);
        assert_eq!(r.cases[0].category, FailureCategory::MultipleWeakSignals);
        assert_eq!(r.summary[0].share, 1.0);
    }

    #[test]
    fn mapping_changes_failures() {
        let mid = p1(&[RuleId::UrlShortener], 2);
        let dns = DnsLookup::Unknown;
        let items = [input(Label::Phishing, Verdict::NeedsReview, &mid, &dns, true)];
        assert_eq!(failure_taxonomy(&items, PositiveMapping::Strict, 2).cases.len(), 1);
        assert!(failure_taxonomy(&items, PositiveMapping::Escalation, 2).cases.is_empty());
    }
}
