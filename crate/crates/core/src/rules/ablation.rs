use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{DnsLookup, RuleConfig, RuleEngine, RuleId};
use crate::eval::metrics::{compute_dual_metrics, DualMetrics};
use crate::message::EmailMessage;
use crate::{Error, Result};

/// How often one rule fired and how often it was right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleStats {
    pub rule: RuleId,
    pub triggered: usize,
    pub triggered_phishing: usize,
    /// Share of phishing items on which the rule fired.
    pub phishing_coverage: f64,
    /// P(phishing | triggered); 0 when the rule never fired.
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub disabled: Vec<RuleId>,
    pub metrics: DualMetrics,
    pub rule_stats: Vec<RuleStats>,
}

/// Scores a labeled dataset with `disabled` rules switched off.
pub fn rule_ablation(
    dataset: &[(EmailMessage, DnsLookup)],
    cfg: &RuleConfig,
    disabled: &BTreeSet<RuleId>,
) -> Result<AblationReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut cfg = cfg.clone();
    cfg.enabled_rules.retain(|r| !disabled.contains(r));
    let engine = RuleEngine::new(cfg)?;

    let mut preds = Vec::with_capacity(dataset.len());
    let mut fired_sets = Vec::with_capacity(dataset.len());
    for (msg, dns) in dataset {
        let truth = msg.ground_truth.ok_or_else(|| Error::Unlabeled(msg.id.clone()))?;
        let r = engine.evaluate(msg, dns);
        preds.push((r.verdict, truth));
        fired_sets.push(r.indicators.fired().collect::<Vec<_>>());
    }

    let n_phish = preds.iter().filter(|(_, t)| t.is_phishing()).count();
    let rule_stats = engine
        .config()
        .enabled_rules
        .iter()
        .map(|&rule| {
            let mut triggered = 0;
            let mut triggered_phishing = 0;
            for (fired, (_, truth)) in fired_sets.iter().zip(&preds) {
                if fired.contains(&rule) {
                    triggered += 1;
                    triggered_phishing += usize::from(truth.is_phishing());
                }
            }
            RuleStats {
                rule,
                triggered,
                triggered_phishing,
                phishing_coverage: if n_phish == 0 { 0.0 } else { triggered_phishing as f64 / n_phish as f64 },
                precision: if triggered == 0 { 0.0 } else { triggered_phishing as f64 / triggered as f64 },
            }
        })
        .collect();

    Ok(AblationReport { disabled: disabled.iter().copied().collect(), metrics: compute_dual_metrics(&preds), rule_stats })
}

/// One ablation per enabled rule, each with only that rule disabled.
pub fn leave_one_out(dataset: &[(EmailMessage, DnsLookup)], cfg: &RuleConfig) -> Result<Vec<AblationReport>> {
    cfg.enabled_rules
        .iter()
        .map(|&r| rule_ablation(dataset, cfg, &BTreeSet::from([r])))
        .collect()
}
