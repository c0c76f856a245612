use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AttackMatch;
use crate::message::Label;
use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelCoverage {
    pub n: usize,
    pub activated: usize,
    pub activation_rate: f64,
    /// Mean number of attack types per activated email.
    pub mean_labels_per_activated: f64,
    /// Mean top-match confidence over activated emails.
    pub mean_confidence: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttackPrevalence {
    pub count: usize,
    /// Share of all emails carrying this attack type.
    pub rate: f64,
    pub phishing: usize,
    pub benign: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub overall: LabelCoverage,
    pub phishing: LabelCoverage,
    pub benign: LabelCoverage,
    pub attack_prevalence: BTreeMap<String, AttackPrevalence>,
    /// Share of activated benign emails whose top confidence exceeds the
    /// phishing mean confidence.
    pub benign_above_phishing_mean: f64,
}

fn summarize<'a, I: Iterator<Item = &'a [AttackMatch]>>(items: I) -> LabelCoverage {
    let mut cov = LabelCoverage::default();
    let mut labels = 0usize;
    let mut conf = 0.0;
    for matches in items {
        cov.n += 1;
        if let Some(top) = matches.first() {
            cov.activated += 1;
            labels += matches.len();
            conf += top.confidence_f64();
        }
    }
    if cov.n > 0 {
        cov.activation_rate = cov.activated as f64 / cov.n as f64;
    }
    if cov.activated > 0 {
        cov.mean_labels_per_activated = labels as f64 / cov.activated as f64;
        cov.mean_confidence = conf / cov.activated as f64;
    }
    cov
}

/// Activation statistics over classified emails. Unlabeled items count
/// toward the overall figures only.
pub fn coverage_report(results: &[(Option<Label>, Vec<AttackMatch>)]) -> Result<CoverageReport> {
    if results.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let by = |label: Label| results.iter().filter(move |(l, _)| *l == Some(label)).map(|(_, m)| m.as_slice());
    let overall = summarize(results.iter().map(|(_, m)| m.as_slice()));
    let phishing = summarize(by(Label::Phishing));
    let benign = summarize(by(Label::Benign));

    let mut attack_prevalence: BTreeMap<String, AttackPrevalence> = BTreeMap::new();
    for (label, matches) in results {
        for m in matches {
            let e = attack_prevalence.entry(m.attack.clone()).or_default();
            e.count += 1;
            match label {
                Some(Label::Phishing) => e.phishing += 1,
                Some(Label::Benign) => e.benign += 1,
                None => {}
            }
        }
    }
    for e in attack_prevalence.values_mut() {
        e.rate = e.count as f64 / results.len() as f64;
    }

    let above = by(Label::Benign)
        .filter_map(|m| m.first())
        .filter(|top| top.confidence_f64() > phishing.mean_confidence)
        .count();
    let benign_above_phishing_mean = if benign.activated == 0 { 0.0 } else { above as f64 / benign.activated as f64 };

    Ok(CoverageReport { overall, phishing, benign, attack_prevalence, benign_above_phishing_mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    fn m(name: &str, n: u64, d: u64) -> AttackMatch {
        AttackMatch { attack: name.into(), confidence: Ratio::new(n, d), satisfied_properties: Default::default() }
    }

    #[test]
    fn all_benign_no_activation() {
        let r = coverage_report(&[(Some(Label::Benign), vec![]), (Some(Label::Benign), vec![])]).unwrap();
        assert_eq!(r.overall.activation_rate, 0.0);
        assert_eq!(r.benign_above_phishing_mean, 0.0);
    }

    #[test]
    fn three_of_four_activate() {
        let results = vec![
            (Some(Label::Phishing), vec![m("A", 1, 1), m("B", 1, 2)]),
            (Some(Label::Phishing), vec![m("A", 1, 2)]),
            (Some(Label::Benign), vec![m("B", 2, 3)]),
            (Some(Label::Benign), vec![]),
        ];
        let r = coverage_report(&results).unwrap();
        assert_eq!(r.overall.activation_rate, 0.75);
        assert_eq!(r.overall.mean_labels_per_activated, 4.0 / 3.0);
        // spreadsheet: phishing tops 1.0 and 0.5
        assert!((r.phishing.mean_confidence - 0.75).abs() < 1e-12);
        assert!((r.benign.mean_confidence - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.benign_above_phishing_mean, 0.0);
        assert_eq!(r.attack_prevalence["A"].count, 2);
        assert_eq!(r.attack_prevalence["B"].benign, 1);
        assert_eq!(r.attack_prevalence["B"].rate, 0.5);
    }

    #[test]
    fn empty_rejected() {
        assert!(matches!(coverage_report(&[]), Err(Error::EmptyDataset)));
    }
}
