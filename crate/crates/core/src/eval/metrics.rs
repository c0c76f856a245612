use serde::{Deserialize, Serialize};

use crate::message::Label;
use crate::rules::Verdict;

/// How `needs_review` counts toward binary metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PositiveMapping {
    /// Only `phishing` is positive.
    #[default]
    Strict,
    /// `phishing` and `needs_review` are positive.
    Escalation,
}

impl PositiveMapping {
    pub fn is_positive(self, v: Verdict) -> bool {
        match self {
            PositiveMapping::Strict => v == Verdict::Phishing,
            PositiveMapping::Escalation => v != Verdict::Benign,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_binary<I: IntoIterator<Item = (bool, bool)>>(pairs: I) -> Self {
        let mut c = Confusion::default();
        for (pred, truth) in pairs {
            match (pred, truth) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(flatten)]
    pub confusion: Confusion,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fpr: f64,
    pub positive_mapping: PositiveMapping,
    /// Metrics whose denominator was zero and were reported as 0.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub undefined: Vec<String>,
}

fn ratio(num: usize, den: usize, name: &str, undefined: &mut Vec<String>) -> f64 {
    if den == 0 {
        undefined.push(name.to_string());
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricsReport {
    pub fn from_confusion(c: Confusion, mapping: PositiveMapping) -> Self {
        let mut undefined = Vec::new();
        let accuracy = ratio(c.tp + c.tn, c.total(), "accuracy", &mut undefined);
        let precision = ratio(c.tp, c.tp + c.fp, "precision", &mut undefined);
        let recall = ratio(c.tp, c.tp + c.fn_, "recall", &mut undefined);
        let fpr = ratio(c.fp, c.fp + c.tn, "fpr", &mut undefined);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        MetricsReport { confusion: c, accuracy, precision, recall, f1, fpr, positive_mapping: mapping, undefined }
    }

    pub fn metric(&self, name: MetricName) -> f64 {
        match name {
            MetricName::Accuracy => self.accuracy,
            MetricName::Precision => self.precision,
            MetricName::Recall => self.recall,
            MetricName::F1 => self.f1,
            MetricName::Fpr => self.fpr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    Accuracy,
    Precision,
    Recall,
    F1,
    Fpr,
}

impl MetricName {
    pub const ALL: [MetricName; 5] =
        [MetricName::Accuracy, MetricName::Precision, MetricName::Recall, MetricName::F1, MetricName::Fpr];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::Accuracy => "accuracy",
            MetricName::Precision => "precision",
            MetricName::Recall => "recall",
            MetricName::F1 => "f1",
            MetricName::Fpr => "fpr",
        }
    }
}

pub fn compute_metrics(preds: &[(Verdict, Label)], mapping: PositiveMapping) -> MetricsReport {
    let c = Confusion::from_binary(preds.iter().map(|&(v, t)| (mapping.is_positive(v), t.is_phishing())));
    MetricsReport::from_confusion(c, mapping)
}

/// Both mappings side by side, plus the share of items sent to review.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualMetrics {
    pub strict: MetricsReport,
    pub escalation: MetricsReport,
    pub review_rate: f64,
    pub n: usize,
}

pub fn compute_dual_metrics(preds: &[(Verdict, Label)]) -> DualMetrics {
    let review = preds.iter().filter(|(v, _)| *v == Verdict::NeedsReview).count();
    DualMetrics {
        strict: compute_metrics(preds, PositiveMapping::Strict),
        escalation: compute_metrics(preds, PositiveMapping::Escalation),
        review_rate: if preds.is_empty() { 0.0 } else { review as f64 / preds.len() as f64 },
        n: preds.len(),
    }
}
