use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::failure::{failure_taxonomy, FailureInput, FailureReport};
use super::metrics::{compute_dual_metrics, DualMetrics, MetricName, MetricsReport, PositiveMapping};
use super::stats::{bootstrap_ci, mcnemar, BootstrapCI, McNemarResult, DEFAULT_PERMUTATIONS, DEFAULT_RESAMPLES};
use super::sweep::{linear_grid, threshold_sweep, SweepAxis, SweepReport};
use crate::decision::RationaleCode;
use crate::manifest::RunManifest;
use crate::message::{EmailMessage, Label};
use crate::ontology::{coverage_report, CoverageReport};
use crate::pipeline::{Analysis, Analyzer, Phase2Status};
use crate::redaction::{pii_statistics, PiiStatistics, Redactor};
use crate::rules::Verdict;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub jobs: usize,
    pub resamples: usize,
    pub permutations: usize,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { jobs: 1, resamples: DEFAULT_RESAMPLES, permutations: DEFAULT_PERMUTATIONS, seed: 42 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub label: Label,
    pub phase1_score: u32,
    pub phase1_verdict: Verdict,
    pub verdict: Verdict,
    pub rationale_code: RationaleCode,
    pub s_top: f64,
    pub s_avg: f64,
    pub rag_score: f64,
    pub attacks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub manifest: RunManifest,
    pub n: usize,
    pub n_phishing: usize,
    pub n_benign: usize,
    pub phase1: DualMetrics,
    pub pipeline: DualMetrics,
    pub phase1_verdicts: BTreeMap<Verdict, usize>,
    pub pipeline_verdicts: BTreeMap<Verdict, usize>,
    pub rationale_codes: BTreeMap<RationaleCode, usize>,
    pub mean_display_score: f64,
    /// Pipeline, strict mapping.
    pub confidence_intervals: Vec<BootstrapCI>,
    /// Phase 1 against the full pipeline, strict mapping. None when the two
    /// never disagree on correctness.
    pub mcnemar: Option<McNemarResult>,
    pub phase1_sweep: SweepReport,
    pub similarity_sweep: Option<SweepReport>,
    pub failures: FailureReport,
    pub ontology_coverage: CoverageReport,
    pub pii: PiiStatistics,
    pub degraded: usize,
}

fn count<K: Ord, I: IntoIterator<Item = K>>(items: I) -> BTreeMap<K, usize> {
    let mut m = BTreeMap::new();
    for k in items {
        *m.entry(k).or_default() += 1;
    }
    m
}

/// Runs the pipeline over a labeled dataset and aggregates every report.
pub fn evaluate_dataset(
    dataset: &[EmailMessage],
    analyzer: &Analyzer,
    opts: &EvalOptions,
    manifest: RunManifest,
) -> Result<(EvaluationReport, Vec<Prediction>)> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let labels: Vec<Label> =
        dataset.iter().map(|m| m.ground_truth.ok_or_else(|| Error::Unlabeled(m.id.clone()))).collect::<Result<_>>()?;
    let analyses = analyzer.analyze_batch(dataset, opts.jobs)?;
    Ok(aggregate(dataset, &labels, &analyses, analyzer, opts, manifest))
}

fn aggregate(
    dataset: &[EmailMessage],
    labels: &[Label],
    analyses: &[Analysis],
    analyzer: &Analyzer,
    opts: &EvalOptions,
    manifest: RunManifest,
) -> (EvaluationReport, Vec<Prediction>) {
    let p1: Vec<(Verdict, Label)> = analyses.iter().zip(labels).map(|(a, &l)| (a.phase1.verdict, l)).collect();
    let full: Vec<(Verdict, Label)> = analyses.iter().zip(labels).map(|(a, &l)| (a.decision.verdict, l)).collect();

    let confidence_intervals = [MetricName::Precision, MetricName::Recall, MetricName::F1, MetricName::Fpr, MetricName::Accuracy]
        .into_iter()
        .map(|m| bootstrap_ci(&full, m, PositiveMapping::Strict, opts.resamples, opts.seed).expect("nonempty"))
        .collect();

    let strict = |v: Verdict| PositiveMapping::Strict.is_positive(v);
    let truths: Vec<bool> = labels.iter().map(|l| l.is_phishing()).collect();
    let a: Vec<bool> = p1.iter().map(|(v, _)| strict(*v)).collect();
    let b: Vec<bool> = full.iter().map(|(v, _)| strict(*v)).collect();
    let mcnemar = mcnemar(&a, &b, &truths, opts.permutations, opts.seed).ok();

    let p1_scored: Vec<(f64, bool)> = analyses.iter().zip(&truths).map(|(a, &t)| (a.phase1.score as f64, t)).collect();
    let max_score = analyses.iter().map(|a| a.phase1.score).max().unwrap_or(0).max(10);
    let p1_grid: Vec<f64> = (0..=max_score).map(f64::from).collect();
    let phase1_sweep = threshold_sweep(&p1_scored, SweepAxis::Phase1Score, &p1_grid).expect("nonempty grid");
    let similarity_sweep = analyses.iter().any(|a| a.phase2 == Phase2Status::Completed).then(|| {
        let scored: Vec<(f64, bool)> = analyses.iter().zip(&truths).map(|(a, &t)| (a.stats.s_top, t)).collect();
        threshold_sweep(&scored, SweepAxis::RagSimilarity, &linear_grid(0.0, 0.8, 17)).expect("nonempty grid")
    });

    let benign_upper = analyzer.rule_config().benign_upper;
    let inputs: Vec<FailureInput<'_>> = analyses
        .iter()
        .zip(dataset)
        .zip(labels)
        .map(|((a, m), &label)| FailureInput {
            id: &a.id,
            label,
            verdict: a.decision.verdict,
            phase1: &a.phase1,
            dns: &a.dns,
            has_urls: !m.urls.is_empty(),
        })
        .collect();
    let failures = failure_taxonomy(&inputs, PositiveMapping::Strict, benign_upper);

    let cov_input: Vec<(Option<Label>, Vec<_>)> =
        analyses.iter().zip(labels).map(|(a, &l)| (Some(l), a.matches.clone())).collect();
    let ontology_coverage = coverage_report(&cov_input).expect("nonempty");
    let texts: Vec<String> = dataset.iter().map(|m| m.content_text()).collect();
    let pii = pii_statistics(&Redactor::default(), texts.iter().map(String::as_str));

    let predictions: Vec<Prediction> = analyses
        .iter()
        .zip(labels)
        .map(|(a, &label)| Prediction {
            id: a.id.clone(),
            label,
            phase1_score: a.phase1.score,
            phase1_verdict: a.phase1.verdict,
            verdict: a.decision.verdict,
            rationale_code: a.decision.rationale_code,
            s_top: a.stats.s_top,
            s_avg: a.stats.s_avg,
            rag_score: a.decision.rag_score,
            attacks: a.matches.iter().map(|m| m.attack.clone()).collect(),
        })
        .collect();

    let n_phishing = labels.iter().filter(|l| l.is_phishing()).count();
    let report = EvaluationReport {
        manifest,
        n: dataset.len(),
        n_phishing,
        n_benign: dataset.len() - n_phishing,
        phase1: compute_dual_metrics(&p1),
        pipeline: compute_dual_metrics(&full),
        phase1_verdicts: count(p1.iter().map(|(v, _)| *v)),
        pipeline_verdicts: count(full.iter().map(|(v, _)| *v)),
        rationale_codes: count(analyses.iter().map(|a| a.decision.rationale_code)),
        mean_display_score: analyses.iter().map(|a| a.decision.display_score).sum::<f64>() / analyses.len() as f64,
        confidence_intervals,
        mcnemar,
        phase1_sweep,
        similarity_sweep,
        failures,
        ontology_coverage,
        pii,
        degraded: analyses.iter().filter(|a| a.degraded).count(),
    };
    (report, predictions)
}

fn pct(x: f64) -> String {
    format!("{:.1}%", x * 100.0)
}

fn metrics_row(s: &mut String, name: &str, m: &MetricsReport) {
    let _ = writeln!(
        s,
        "| {name} | {} | {} | {} | {:.3} | {} | {} | {} | {} | {} |",
        pct(m.accuracy),
        pct(m.precision),
        pct(m.recall),
        m.f1,
        pct(m.fpr),
        m.confusion.tp,
        m.confusion.fp,
        m.confusion.fn_,
        m.confusion.tn
    );
}

fn sweep_table(s: &mut String, r: &SweepReport) {
    let _ = writeln!(s, "| Threshold | Precision | Recall | F1 | FPR |\n|---:|---:|---:|---:|---:|");
    for row in &r.rows {
        let m = &row.metrics;
        let _ = writeln!(s, "| {:.2} | {} | {:.3} | {:.3} | {} |", row.threshold, pct(m.precision), m.recall, m.f1, pct(m.fpr));
    }
    let fmt = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.3}"));
    let _ = writeln!(
        s,
        "\nAUROC {}, AUPRC {}, best F1 {:.3} at {:.2}\n",
        fmt(r.auroc),
        fmt(r.auprc),
        r.best_f1,
        r.best_f1_threshold
    );
}

pub fn render_markdown(r: &EvaluationReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Evaluation report\n");
    let _ = writeln!(s, "{} messages ({} phishing, {} benign)\n", r.n, r.n_phishing, r.n_benign);
    let _ = writeln!(s, "## Performance\n");
    let _ = writeln!(s, "| System | Accuracy | Precision | Recall | F1 | FPR | TP | FP | FN | TN |");
    let _ = writeln!(s, "|---|---:|---:|---:|---:|---:|---:|---:|---:|---:|");
    metrics_row(&mut s, "Phase 1 (strict)", &r.phase1.strict);
    metrics_row(&mut s, "Phase 1 (escalation)", &r.phase1.escalation);
    metrics_row(&mut s, "Pipeline (strict)", &r.pipeline.strict);
    metrics_row(&mut s, "Pipeline (escalation)", &r.pipeline.escalation);
    let _ = writeln!(
        s,
        "\nStrict counts only `phishing` as positive; escalation also counts `needs_review`. Review rate: Phase 1 {}, pipeline {}.\n",
        pct(r.phase1.review_rate),
        pct(r.pipeline.review_rate)
    );

    let _ = writeln!(s, "## Verdicts\n\n| Verdict | Phase 1 | Pipeline |\n|---|---:|---:|");
    for v in [Verdict::Phishing, Verdict::NeedsReview, Verdict::Benign] {
        let g = |m: &BTreeMap<Verdict, usize>| m.get(&v).copied().unwrap_or(0);
        let _ = writeln!(s, "| {} | {} | {} |", v.as_str(), g(&r.phase1_verdicts), g(&r.pipeline_verdicts));
    }
    let _ = writeln!(s, "\nMean display score {:.2}/10. Degraded analyses: {}.\n", r.mean_display_score, r.degraded);
    let _ = writeln!(s, "| Rationale | Count |\n|---|---:|");
    for (code, n) in &r.rationale_codes {
        let _ = writeln!(s, "| {code} | {n} |");
    }

    let _ = writeln!(s, "\n## Bootstrap 95% intervals (pipeline, strict)\n\n| Metric | Estimate | Lower | Upper |\n|---|---:|---:|---:|");
    for ci in &r.confidence_intervals {
        let _ = writeln!(s, "| {} | {:.3} | {:.3} | {:.3} |", ci.metric.as_str(), ci.point, ci.lower, ci.upper);
    }

    let _ = writeln!(s, "\n## McNemar (Phase 1 vs pipeline)\n");
    match &r.mcnemar {
        Some(m) => {
            let _ = writeln!(
                s,
                "b = {}, c = {}, chi2 = {:.3}, p = {:.3e} (permutation p = {:.4}, {} draws)\n",
                m.b, m.c, m.chi2, m.p_value, m.p_permutation, m.permutations
            );
        }
        None => {
            let _ = writeln!(s, "no discordant pairs\n");
        }
    }

    let _ = writeln!(s, "## Phase 1 threshold sensitivity\n");
    sweep_table(&mut s, &r.phase1_sweep);
    if let Some(sw) = &r.similarity_sweep {
        let _ = writeln!(s, "## Similarity threshold sensitivity\n");
        sweep_table(&mut s, sw);
    }

    let _ = writeln!(s, "## Failure taxonomy\n\n| Kind | Category | Count | Share |\n|---|---|---:|---:|");
    for row in &r.failures.summary {
        let kind = serde_json::to_value(row.kind).expect("serializes");
        let cat = serde_json::to_value(row.category).expect("serializes");
        let _ = writeln!(s, "| {} | {} | {} | {} |", kind.as_str().unwrap_or(""), cat.as_str().unwrap_or(""), row.count, pct(row.share));
    }

    let c = &r.ontology_coverage;
    let _ = writeln!(s, "\n## Ontology coverage\n\n| Group | n | Activated | Rate | Labels/activated | Mean c |\n|---|---:|---:|---:|---:|---:|");
    for (name, g) in [("all", &c.overall), ("phishing", &c.phishing), ("benign", &c.benign)] {
        let _ = writeln!(
            s,
            "| {name} | {} | {} | {} | {:.2} | {:.3} |",
            g.n,
            g.activated,
            pct(g.activation_rate),
            g.mean_labels_per_activated,
            g.mean_confidence
        );
    }
    let _ = writeln!(s, "\n| Attack type | Count | Phishing | Benign |\n|---|---:|---:|---:|");
    for (name, p) in &c.attack_prevalence {
        let _ = writeln!(s, "| {name} | {} | {} | {} |", p.count, p.phishing, p.benign);
    }

    let _ = writeln!(s, "\n## Sensitive data\n\n{} of {} messages contain PII ({}).\n", r.pii.documents_with_pii, r.pii.documents, pct(r.pii.exposure_rate));
    let _ = writeln!(s, "| Kind | Matches | Documents |\n|---|---:|---:|");
    for (k, n) in &r.pii.totals {
        let _ = writeln!(s, "| {k} | {n} | {} |", r.pii.documents_per_kind.get(k).copied().unwrap_or(0));
    }
    s
}

/// Writes report.json, report.md, predictions.jsonl and manifest.json.
pub fn write_report(dir: impl AsRef<Path>, report: &EvaluationReport, predictions: &[Prediction]) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(report)? + "\n")?;
    std::fs::write(dir.join("report.md"), render_markdown(report))?;
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&report.manifest)? + "\n")?;
    let mut lines = String::new();
    for p in predictions {
        lines.push_str(&serde_json::to_string(p)?);
        lines.push('\n');
    }
    std::fs::write(dir.join("predictions.jsonl"), lines)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::CascadeConfig;
    use crate::ontology::OntologyConfig;
    use crate::rules::RuleConfig;

    fn dataset() -> Vec<EmailMessage> {
        let mk = |id: &str, from: &str, subject: &str, body: &str, label: Label| {
            let mut m = EmailMessage::from_parts(
                id,
                vec![("From".into(), from.into()), ("Subject".into(), subject.into())],
                body.into(),
            );
            m.ground_truth = Some(label);
            m
        };
        vec![
            mk("p1", "x@bad.tk", "URGENT verify", "Dear customer, verify your password at http://10.1.2.3/a", Label::Phishing),
            mk("p2", "y@bad.tk", "Hello", "see attached", Label::Phishing),
            mk("b1", "a@good.org", "Lunch", "see you at noon, call 555-123-4567", Label::Benign),
            mk("b2", "b@good.org", "Report", "numbers attached", Label::Benign),
        ]
    }

    #[test]
    fn aggregates_and_renders() {
        let an = Analyzer::new(RuleConfig::default(), OntologyConfig::default(), CascadeConfig::default()).unwrap();
        let opts = EvalOptions { resamples: 50, permutations: 50, ..Default::default() };
        let (r, preds) = evaluate_dataset(&dataset(), &an, &opts, RunManifest::new("test")).unwrap();
        assert_eq!((r.n, r.n_phishing, preds.len()), (4, 2, 4));
        assert_eq!(r.pipeline.strict.confusion.total(), 4);
        let fails = r.pipeline.strict.confusion.fp + r.pipeline.strict.confusion.fn_;
        assert_eq!(r.failures.cases.len(), fails);
        assert_eq!(r.pii.documents_with_pii, 1);
        assert!(r.similarity_sweep.is_none());
        let md = render_markdown(&r);
        assert!(md.contains("## Failure taxonomy") && md.contains("Pipeline (strict)"));

        let dir = tempfile::tempdir().unwrap();
        write_report(dir.path(), &r, &preds).unwrap();
        let first = std::fs::read(dir.path().join("report.json")).unwrap();
        let (r2, p2) = evaluate_dataset(&dataset(), &an, &opts, RunManifest::new("test")).unwrap();
        write_report(dir.path(), &r2, &p2).unwrap();
        assert_eq!(first, std::fs::read(dir.path().join("report.json")).unwrap());
    }

    #[test]
    fn unlabeled_rejected() {
        let an = Analyzer::new(RuleConfig::default(), OntologyConfig::default(), CascadeConfig::default()).unwrap();
        let mut d = dataset();
        d[1].ground_truth = None;
        assert!(matches!(evaluate_dataset(&d, &an, &EvalOptions::default(), RunManifest::new("t")), Err(Error::Unlabeled(_))));
    }
}
