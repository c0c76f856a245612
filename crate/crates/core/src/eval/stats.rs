use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF};

use super::metrics::{compute_metrics, MetricName, PositiveMapping};
use crate::message::Label;
use crate::rules::Verdict;
use crate::{Error, Result};

pub const DEFAULT_RESAMPLES: usize = 1000;
pub const DEFAULT_PERMUTATIONS: usize = 10_000;
/// Below this many discordant pairs the exact binomial p-value is used.
pub const EXACT_BELOW: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCI {
    pub metric: MetricName,
    /// Estimate on the full set.
    pub point: f64,
    /// Mean over resamples.
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub resamples: usize,
    pub seed: u64,
}

/// Linear-interpolated percentile of sorted data, `q` in [0, 1].
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn resample_indices(rng: &mut ChaCha8Rng, n: usize, out: &mut Vec<usize>) {
    out.clear();
    out.extend((0..n).map(|_| rng.random_range(0..n)));
}

/// Percentile bootstrap at 95%, resampling predictions with replacement.
pub fn bootstrap_ci(
    preds: &[(Verdict, Label)],
    metric: MetricName,
    mapping: PositiveMapping,
    resamples: usize,
    seed: u64,
) -> Result<BootstrapCI> {
    if preds.is_empty() || resamples == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = Vec::with_capacity(preds.len());
    let mut sample = Vec::with_capacity(preds.len());
    let mut values: Vec<f64> = (0..resamples)
        .map(|_| {
            resample_indices(&mut rng, preds.len(), &mut idx);
            sample.clear();
            sample.extend(idx.iter().map(|&i| preds[i]));
            compute_metrics(&sample, mapping).metric(metric)
        })
        .collect();
    values.sort_by(f64::total_cmp);
    Ok(BootstrapCI {
        metric,
        point: compute_metrics(preds, mapping).metric(metric),
        mean: values.iter().sum::<f64>() / resamples as f64,
        lower: percentile(&values, 0.025),
        upper: percentile(&values, 0.975),
        resamples,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedBootstrap {
    pub metric: MetricName,
    /// metric(b) - metric(a) on the full set.
    pub delta: f64,
    pub lower: f64,
    pub upper: f64,
    /// Share of resamples where b does not beat a.
    pub p_value: f64,
    pub resamples: usize,
    pub seed: u64,
}

/// Bootstrap of the metric difference between two systems scored on the
/// same items, using shared resample indices.
pub fn paired_bootstrap(
    a: &[Verdict],
    b: &[Verdict],
    truths: &[Label],
    metric: MetricName,
    mapping: PositiveMapping,
    resamples: usize,
    seed: u64,
) -> Result<PairedBootstrap> {
    if a.len() != b.len() || a.len() != truths.len() {
        return Err(Error::Config(format!("misaligned inputs: {}, {}, {}", a.len(), b.len(), truths.len())));
    }
    if a.is_empty() || resamples == 0 {
        return Err(Error::EmptyDataset);
    }
    let score = |v: &[Verdict], idx: &mut dyn Iterator<Item = usize>| {
        let s: Vec<(Verdict, Label)> = idx.map(|i| (v[i], truths[i])).collect();
        compute_metrics(&s, mapping).metric(metric)
    };
    let n = a.len();
    let delta = score(b, &mut (0..n)) - score(a, &mut (0..n));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = Vec::with_capacity(n);
    let mut diffs: Vec<f64> = (0..resamples)
        .map(|_| {
            resample_indices(&mut rng, n, &mut idx);
            score(b, &mut idx.iter().copied()) - score(a, &mut idx.iter().copied())
        })
        .collect();
    diffs.sort_by(f64::total_cmp);
    let not_better = diffs.iter().filter(|d| **d <= 0.0).count();
    Ok(PairedBootstrap {
        metric,
        delta,
        lower: percentile(&diffs, 0.025),
        upper: percentile(&diffs, 0.975),
        p_value: not_better as f64 / resamples as f64,
        resamples,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McNemarResult {
    /// A correct, B wrong.
    pub b: usize,
    /// A wrong, B correct.
    pub c: usize,
    /// Continuity-corrected statistic.
    pub chi2: f64,
    /// Upper tail of chi-squared with one degree of freedom.
    pub p_chi2: f64,
    /// Two-sided exact binomial p-value, when b + c is small.
    pub p_exact: Option<f64>,
    /// p-value reported as primary: exact when available, else chi-squared.
    pub p_value: f64,
    pub p_permutation: f64,
    pub permutations: usize,
}

/// McNemar's test on paired correctness of two classifiers.
pub fn mcnemar(a: &[bool], b: &[bool], truths: &[bool], permutations: usize, seed: u64) -> Result<McNemarResult> {
    if a.len() != b.len() || a.len() != truths.len() {
        return Err(Error::Config(format!("misaligned inputs: {}, {}, {}", a.len(), b.len(), truths.len())));
    }
    let (mut nb, mut nc) = (0usize, 0usize);
    for ((&pa, &pb), &t) in a.iter().zip(b).zip(truths) {
        match (pa == t, pb == t) {
            (true, false) => nb += 1,
            (false, true) => nc += 1,
            _ => {}
        }
    }
    mcnemar_counts(nb, nc, permutations, seed)
}

pub fn mcnemar_counts(b: usize, c: usize, permutations: usize, seed: u64) -> Result<McNemarResult> {
    let n = b + c;
    if n == 0 {
        return Err(Error::DegeneratePair);
    }
    let diff = (b as f64 - c as f64).abs();
    let chi2 = (diff - 1.0).powi(2) / n as f64;
    let p_chi2 = ChiSquared::new(1.0).expect("valid dof").sf(chi2);
    let p_exact = (n < EXACT_BELOW).then(|| {
        let bin = Binomial::new(0.5, n as u64).expect("valid binomial");
        (2.0 * bin.cdf(b.min(c) as u64)).min(1.0)
    });

    // Under H0 each discordant pair falls on either side with probability 1/2.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let observed = b.abs_diff(c);
    let extreme = (0..permutations)
        .filter(|_| {
            let bs = (0..n).filter(|_| rng.random_bool(0.5)).count();
            bs.abs_diff(n - bs) >= observed
        })
        .count();
    let p_permutation = (extreme + 1) as f64 / (permutations + 1) as f64;

    Ok(McNemarResult {
        b,
        c,
        chi2,
        p_chi2,
        p_exact,
        p_value: p_exact.unwrap_or(p_chi2),
        p_permutation,
        permutations,
    })
}
