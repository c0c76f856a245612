use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, MetricsReport, PositiveMapping};
use crate::message::{EmailMessage, Label};
use crate::redaction::{PiiCounts, Redactor};
use crate::rules::Verdict;
use crate::textgen::{estimate_tokens, PriceSheet, TextGenError, TextGenProvider};
use crate::{Error, Result};

fn labels(msgs: &[EmailMessage]) -> Result<Vec<Label>> {
    msgs.iter().map(|m| m.ground_truth.ok_or_else(|| Error::Unlabeled(m.id.clone()))).collect()
}

fn verdict_of(phishing: bool) -> Verdict {
    if phishing {
        Verdict::Phishing
    } else {
        Verdict::Benign
    }
}

/// Text seen by the text baselines.
pub fn message_text(m: &EmailMessage) -> String {
    format!("{}\n{}", m.subject, m.body_text)
}

/// Predicts the most frequent training label; ties go to benign.
pub fn baseline_majority(train: &[EmailMessage], test: &[EmailMessage]) -> Result<MetricsReport> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let train_labels = labels(train)?;
    let phish = train_labels.iter().filter(|l| l.is_phishing()).count();
    let predict = verdict_of(phish * 2 > train_labels.len());
    let preds: Vec<_> = labels(test)?.into_iter().map(|t| (predict, t)).collect();
    Ok(compute_metrics(&preds, PositiveMapping::Strict))
}

/// Lowercased alphanumeric unigrams and bigrams.
pub fn ngrams(text: &str) -> Vec<String> {
    let words: Vec<String> =
        text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(str::to_lowercase).collect();
    let mut out = words.clone();
    out.extend(words.windows(2).map(|w| format!("{} {}", w[0], w[1])));
    out
}

/// Sparse L2-normalized vector.
pub type SparseVec = Vec<(u32, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfVectorizer {
    pub vocabulary: BTreeMap<String, u32>,
    pub idf: Vec<f64>,
}

impl TfidfVectorizer {
    /// Keeps the `max_features` most frequent terms by document frequency,
    /// ties broken alphabetically. idf = ln((1 + n) / (1 + df)) + 1.
    pub fn fit(docs: &[String], max_features: usize) -> Self {
        let mut df: HashMap<String, usize> = HashMap::new();
        for d in docs {
            let mut terms = ngrams(d);
            terms.sort_unstable();
            terms.dedup();
            for t in terms {
                *df.entry(t).or_default() += 1;
            }
        }
        let mut terms: Vec<(String, usize)> = df.into_iter().collect();
        terms.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        terms.truncate(max_features);
        terms.sort_by(|a, b| a.0.cmp(&b.0));
        let n = docs.len() as f64;
        let idf = terms.iter().map(|(_, f)| ((1.0 + n) / (1.0 + *f as f64)).ln() + 1.0).collect();
        let vocabulary = terms.into_iter().enumerate().map(|(i, (t, _))| (t, i as u32)).collect();
        TfidfVectorizer { vocabulary, idf }
    }

    pub fn transform(&self, doc: &str) -> SparseVec {
        let mut tf: BTreeMap<u32, f64> = BTreeMap::new();
        for t in ngrams(doc) {
            if let Some(&i) = self.vocabulary.get(&t) {
                *tf.entry(i).or_default() += 1.0;
            }
        }
        let mut v: SparseVec = tf.into_iter().map(|(i, c)| (i, c * self.idf[i as usize])).collect();
        let norm = v.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|(_, x)| *x /= norm);
        }
        v
    }

    pub fn len(&self) -> usize {
        self.idf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idf.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams {
    pub learning_rate: f64,
    pub l2: f64,
    pub max_iter: usize,
    /// Stop when the largest gradient component falls below this.
    pub tol: f64,
    pub max_features: usize,
}

impl Default for LogRegParams {
    fn default() -> Self {
        LogRegParams { learning_rate: 2.0, l2: 1e-4, max_iter: 2000, tol: 1e-4, max_features: 50_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    /// False when `max_iter` was reached first; the model is still usable.
    pub converged: bool,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl LogisticModel {
    pub fn decision(&self, x: &SparseVec) -> f64 {
        self.bias + x.iter().map(|&(i, v)| self.weights[i as usize] * v).sum::<f64>()
    }

    pub fn probability(&self, x: &SparseVec) -> f64 {
        sigmoid(self.decision(x))
    }

    /// Full-batch gradient descent from zero weights on mean log loss plus
    /// `l2/2 * |w|^2`.
    pub fn fit(xs: &[SparseVec], ys: &[bool], dim: usize, p: &LogRegParams) -> Self {
        let mut m = LogisticModel { weights: vec![0.0; dim], bias: 0.0, iterations: 0, converged: false };
        let n = xs.len().max(1) as f64;
        let mut grad = vec![0.0; dim];
        for it in 1..=p.max_iter {
            grad.iter_mut().zip(&m.weights).for_each(|(g, w)| *g = p.l2 * w);
            let mut gb = 0.0;
            for (x, &y) in xs.iter().zip(ys) {
                let err = (m.probability(x) - if y { 1.0 } else { 0.0 }) / n;
                gb += err;
                for &(i, v) in x {
                    grad[i as usize] += err * v;
                }
            }
            let gmax = grad.iter().fold(gb.abs(), |a, g| a.max(g.abs()));
            m.weights.iter_mut().zip(&grad).for_each(|(w, g)| *w -= p.learning_rate * g);
            m.bias -= p.learning_rate * gb;
            m.iterations = it;
            if gmax < p.tol {
                m.converged = true;
                break;
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfBaselineReport {
    pub metrics: MetricsReport,
    pub redact_first: bool,
    pub features: usize,
    pub iterations: usize,
    pub converged: bool,
}

pub fn baseline_tfidf_logreg(
    train: &[EmailMessage],
    test: &[EmailMessage],
    redact_first: bool,
    params: &LogRegParams,
) -> Result<TfidfBaselineReport> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let redactor = Redactor::default();
    let prep = |m: &EmailMessage| {
        let t = message_text(m);
        if redact_first {
            redactor.redact(&t).redacted_text
        } else {
            t
        }
    };
    let train_docs: Vec<String> = train.iter().map(prep).collect();
    let train_y: Vec<bool> = labels(train)?.iter().map(|l| l.is_phishing()).collect();
    let vec = TfidfVectorizer::fit(&train_docs, params.max_features);
    let xs: Vec<SparseVec> = train_docs.iter().map(|d| vec.transform(d)).collect();
    let model = LogisticModel::fit(&xs, &train_y, vec.len(), params);
    if !model.converged {
        tracing::warn!(iterations = model.iterations, "logistic regression did not converge");
    }
    let preds: Vec<(Verdict, Label)> = test
        .iter()
        .zip(labels(test)?)
        .map(|(m, t)| (verdict_of(model.probability(&vec.transform(&prep(m))) >= 0.5), t))
        .collect();
    Ok(TfidfBaselineReport {
        metrics: compute_metrics(&preds, PositiveMapping::Strict),
        redact_first,
        features: vec.len(),
        iterations: model.iterations,
        converged: model.converged,
    })
}

pub const ZERO_SHOT_PROMPT: &str = "Is this email phishing? Answer yes or no.\n\n";

/// Reads a yes/no style answer; None when it cannot be interpreted.
pub fn parse_answer(text: &str) -> Option<bool> {
    let t = text.trim().trim_start_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
    if t.starts_with("yes") || t.starts_with("phishing") {
        Some(true)
    } else if ["no", "not", "benign", "legitimate"].iter().any(|p| t.starts_with(p)) {
        Some(false)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureBaselineReport {
    pub provider: String,
    pub metrics: MetricsReport,
    pub payloads: usize,
    pub exposed_payloads: usize,
    pub exposure_rate: f64,
    pub pii_totals: PiiCounts,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub estimated_cost: f64,
    /// Answers that could not be read; scored as benign.
    pub unparsed: usize,
}

/// Sends each message unredacted to `provider` with a zero-shot prompt and
/// accounts for the PII that leaves the boundary.
pub fn exposure_baseline(
    test: &[EmailMessage],
    provider: &dyn TextGenProvider,
    prices: &PriceSheet,
) -> Result<ExposureBaselineReport> {
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let redactor = Redactor::default();
    let truths = labels(test)?;
    let mut preds = Vec::with_capacity(test.len());
    let mut report = ExposureBaselineReport {
        provider: provider.id().to_string(),
        metrics: compute_metrics(&[], PositiveMapping::Strict),
        payloads: 0,
        exposed_payloads: 0,
        exposure_rate: 0.0,
        pii_totals: PiiCounts::new(),
        prompt_tokens: 0,
        completion_tokens: 0,
        estimated_cost: 0.0,
        unparsed: 0,
    };
    for (m, truth) in test.iter().zip(truths) {
        let prompt = format!("{ZERO_SHOT_PROMPT}{}", message_text(m));
        let exposure = redactor.scan_exposure(&prompt);
        report.payloads += 1;
        report.exposed_payloads += usize::from(exposure.exposure);
        for (k, c) in exposure.counts {
            *report.pii_totals.entry(k).or_default() += c;
        }
        let answer = match provider.generate(&prompt, 4) {
            Ok(g) => {
                report.prompt_tokens += g.prompt_tokens.unwrap_or_else(|| estimate_tokens(&prompt));
                report.completion_tokens += g.completion_tokens.unwrap_or_else(|| estimate_tokens(&g.text));
                parse_answer(&g.text)
            }
            Err(TextGenError::Refused(_)) => None,
            Err(e) => return Err(Error::ProviderUnavailable(e.to_string())),
        };
        report.unparsed += usize::from(answer.is_none());
        preds.push((verdict_of(answer.unwrap_or(false)), truth));
    }
    report.metrics = compute_metrics(&preds, PositiveMapping::Strict);
    report.exposure_rate = report.exposed_payloads as f64 / report.payloads as f64;
    report.estimated_cost = prices.cost(&report.provider, report.prompt_tokens, report.completion_tokens);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textgen::{Generation, KeywordStub};

    fn msg(id: &str, body: &str, label: Label) -> EmailMessage {
        let mut m = EmailMessage::from_parts(id, vec![("Subject".into(), "hello".into())], body.into());
        m.ground_truth = Some(label);
        m
    }

    fn toy() -> Vec<EmailMessage> {
        vec![
            msg("a", "verify your account password now", Label::Phishing),
            msg("b", "urgent verify password login", Label::Phishing),
            msg("c", "account suspended verify immediately", Label::Phishing),
            msg("d", "lunch meeting tomorrow at noon", Label::Benign),
            msg("e", "quarterly report attached for review", Label::Benign),
            msg("f", "see you at the team lunch", Label::Benign),
        ]
    }

    #[test]
    fn majority() {
        let mut train: Vec<_> = (0..6).map(|i| msg(&format!("b{i}"), "", Label::Benign)).collect();
        train.extend((0..4).map(|i| msg(&format!("p{i}"), "", Label::Phishing)));
        let r = baseline_majority(&train, &toy()).unwrap();
        assert_eq!(r.recall, 0.0);
        let all_phish: Vec<_> = (0..3).map(|i| msg(&format!("p{i}"), "", Label::Phishing)).collect();
        let r = baseline_majority(&all_phish, &toy()).unwrap();
        assert_eq!((r.recall, r.precision), (1.0, 0.5));
        let tie = vec![msg("x", "", Label::Phishing), msg("y", "", Label::Benign)];
        assert_eq!(baseline_majority(&tie, &toy()).unwrap().recall, 0.0);
        assert!(matches!(baseline_majority(&[], &toy()), Err(Error::EmptyDataset)));
    }

    #[test]
    fn ngram_extraction() {
        assert_eq!(ngrams("Hi, Bob!"), vec!["hi", "bob", "hi bob"]);
    }

    #[test]
    fn tfidf_hand_values() {
        let docs = vec!["a b".to_string(), "a".to_string()];
        let v = TfidfVectorizer::fit(&docs, 10);
        // df(a)=2 -> idf 1; df(b)=df("a b")=1 -> idf ln(1.5)+1
        let ia = v.vocabulary["a"] as usize;
        let ib = v.vocabulary["b"] as usize;
        assert!((v.idf[ia] - 1.0).abs() < 1e-12);
        assert!((v.idf[ib] - (1.5f64.ln() + 1.0)).abs() < 1e-12);
        let x = v.transform("a");
        assert_eq!(x, vec![(ia as u32, 1.0)]);
    }

    #[test]
    fn separable_toy_fits_and_is_deterministic() {
        let t = toy();
        let r = baseline_tfidf_logreg(&t, &t, false, &LogRegParams::default()).unwrap();
        assert_eq!(r.metrics.accuracy, 1.0);
        assert_eq!(r, baseline_tfidf_logreg(&t, &t, false, &LogRegParams::default()).unwrap());
        let short = LogRegParams { max_iter: 2, ..LogRegParams::default() };
        assert!(!baseline_tfidf_logreg(&t, &t, false, &short).unwrap().converged);
    }

    #[test]
    fn redaction_changes_only_pii_docs() {
        let docs = ["contact jane.doe@example.com today", "no personal data here"];
        let red = Redactor::default();
        let v = TfidfVectorizer::fit(&docs.iter().map(|s| s.to_string()).collect::<Vec<_>>(), 100);
        for d in docs {
            let changed = v.transform(d) != v.transform(&red.redact(d).redacted_text);
            assert_eq!(changed, red.scan_exposure(d).exposure, "{d}");
        }
    }

    #[test]
    fn exposure_rate_matches_fixture() {
        let test: Vec<_> = (0..1000)
            .map(|i| {
                let body = if i < 532 { format!("reach me at user{i}@example.org") } else { "nothing personal".into() };
                msg(&format!("m{i}"), &body, if i % 2 == 0 { Label::Phishing } else { Label::Benign })
            })
            .collect();
        let r = exposure_baseline(&test, &KeywordStub::new(["reach"]), &PriceSheet::default()).unwrap();
        assert!((r.exposure_rate - 0.532).abs() < 1e-12);
        assert_eq!(r.estimated_cost, 0.0);
        assert_eq!(r.metrics.confusion.total(), 1000);

        let redacted: Vec<_> = test
            .iter()
            .map(|m| {
                let mut m = m.clone();
                m.body_text = Redactor::default().redact(&m.body_text).redacted_text;
                m
            })
            .collect();
        assert_eq!(exposure_baseline(&redacted, &KeywordStub::new(["x"]), &PriceSheet::default()).unwrap().exposure_rate, 0.0);
    }

    struct Down;
    impl TextGenProvider for Down {
        fn id(&self) -> &str {
            "down"
        }
        fn generate(&self, _: &str, _: u32) -> Result<Generation, TextGenError> {
            Err(TextGenError::Unavailable("offline".into()))
        }
    }

    #[test]
    fn unavailable_provider() {
        assert!(matches!(exposure_baseline(&toy(), &Down, &PriceSheet::default()), Err(Error::ProviderUnavailable(_))));
    }

    #[test]
    fn answers() {
        assert_eq!(parse_answer(" Yes."), Some(true));
        assert_eq!(parse_answer("No, it looks fine"), Some(false));
        assert_eq!(parse_answer("**Phishing**"), Some(true));
        assert_eq!(parse_answer("maybe"), None);
    }
}
