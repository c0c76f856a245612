use serde::{Deserialize, Serialize};

use super::metrics::{Confusion, MetricsReport, PositiveMapping};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Phase1Score,
    RagSimilarity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
    /// None when only one class is present.
    pub auroc: Option<f64>,
    pub auprc: Option<f64>,
    pub best_f1_threshold: f64,
    pub best_f1: f64,
}

/// Points of the ROC curve, one per distinct score, from (0,0) to (1,1).
pub fn roc_points(scored: &[(f64, bool)]) -> Vec<(f64, f64)> {
    let (tpr, fpr, _, _) = curve(scored);
    fpr.into_iter().zip(tpr).collect()
}

/// Cumulative rates as the threshold descends through distinct scores.
fn curve(scored: &[(f64, bool)]) -> (Vec<f64>, Vec<f64>, Vec<f64>, usize) {
    let mut s: Vec<(f64, bool)> = scored.to_vec();
    s.sort_by(|a, b| b.0.total_cmp(&a.0));
    let pos = s.iter().filter(|x| x.1).count();
    let neg = s.len() - pos;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut tpr = vec![0.0];
    let mut fpr = vec![0.0];
    let mut precision = vec![1.0];
    let mut i = 0;
    while i < s.len() {
        let score = s[i].0;
        while i < s.len() && s[i].0 == score {
            if s[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        tpr.push(if pos == 0 { 0.0 } else { tp as f64 / pos as f64 });
        fpr.push(if neg == 0 { 0.0 } else { fp as f64 / neg as f64 });
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    (tpr, fpr, precision, pos)
}

/// Trapezoid area under (FPR, TPR).
pub fn auroc(scored: &[(f64, bool)]) -> Option<f64> {
    let pos = scored.iter().filter(|x| x.1).count();
    if pos == 0 || pos == scored.len() {
        return None;
    }
    let (tpr, fpr, _, _) = curve(scored);
    Some(fpr.windows(2).zip(tpr.windows(2)).map(|(f, t)| (f[1] - f[0]) * (t[0] + t[1]) / 2.0).sum())
}

/// Step-interpolated area under precision-recall: sum of recall increments
/// times precision at that point.
pub fn auprc(scored: &[(f64, bool)]) -> Option<f64> {
    let pos = scored.iter().filter(|x| x.1).count();
    if pos == 0 || pos == scored.len() {
        return None;
    }
    let (tpr, _, precision, _) = curve(scored);
    Some(tpr.windows(2).zip(&precision[1..]).map(|(r, p)| (r[1] - r[0]) * p).sum())
}

/// Metrics at each grid threshold, flagging items with score >= threshold.
pub fn threshold_sweep(scored: &[(f64, bool)], axis: SweepAxis, grid: &[f64]) -> Result<SweepReport> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if scored.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let rows: Vec<SweepRow> = grid
        .iter()
        .map(|&t| {
            let c = Confusion::from_binary(scored.iter().map(|&(s, y)| (s >= t, y)));
            SweepRow { threshold: t, metrics: MetricsReport::from_confusion(c, PositiveMapping::Strict) }
        })
        .collect();
    let best = rows
        .iter()
        .fold(None::<&SweepRow>, |acc, r| match acc {
            Some(a) if a.metrics.f1 >= r.metrics.f1 => Some(a),
            _ => Some(r),
        })
        .expect("grid is nonempty");
    Ok(SweepReport {
        axis,
        best_f1_threshold: best.threshold,
        best_f1: best.metrics.f1,
        auroc: auroc(scored),
        auprc: auprc(scored),
        rows,
    })
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Mann-Whitney estimate: P(score_pos > score_neg) + 0.5 P(tie).
    fn auroc_oracle(scored: &[(f64, bool)]) -> f64 {
        let pos: Vec<f64> = scored.iter().filter(|x| x.1).map(|x| x.0).collect();
        let neg: Vec<f64> = scored.iter().filter(|x| !x.1).map(|x| x.0).collect();
        let mut acc = 0.0;
        for p in &pos {
            for n in &neg {
                acc += if p > n { 1.0 } else if p == n { 0.5 } else { 0.0 };
            }
        }
        acc / (pos.len() * neg.len()) as f64
    }

    #[test]
    fn separating_and_constant() {
        let sep = [(0.9, true), (0.8, true), (0.2, false), (0.1, false)];
        assert_eq!(auroc(&sep), Some(1.0));
        assert_eq!(auprc(&sep), Some(1.0));
        let flat = [(0.5, true), (0.5, false), (0.5, false), (0.5, true)];
        assert_eq!(auroc(&flat), Some(0.5));
        assert_eq!(auroc(&[(0.3, true)]), None);
    }

    #[test]
    fn hand_auprc() {
        // ranked: +, -, +  -> recall steps 0.5 at p=1, 0.5 at p=2/3
        let s = [(0.9, true), (0.5, false), (0.1, true)];
        assert!((auprc(&s).unwrap() - (0.5 + 1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn zero_threshold_flags_everything() {
        let s = [(0.0, true), (3.0, true), (1.0, false)];
        let r = threshold_sweep(&s, SweepAxis::Phase1Score, &[0.0, 2.0, 5.0]).unwrap();
        assert_eq!(r.rows[0].metrics.recall, 1.0);
        assert_eq!(r.rows[2].metrics.confusion.tp, 0);
        assert_eq!(r.best_f1_threshold, 0.0);
        assert!(matches!(threshold_sweep(&s, SweepAxis::Phase1Score, &[]), Err(Error::EmptyGrid)));
    }

    #[test]
    fn grid() {
        assert_eq!(linear_grid(0.0, 1.0, 5), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    fn arb_scored() -> impl Strategy<Value = Vec<(f64, bool)>> {
        prop::collection::vec(((0u8..20).prop_map(|x| x as f64 / 4.0), any::<bool>()), 2..60)
    }

    proptest! {
        #[test]
        fn matches_rank_oracle(s in arb_scored()) {
            if let Some(a) = auroc(&s) {
                prop_assert!((a - auroc_oracle(&s)).abs() < 1e-9);
            }
        }

        #[test]
        fn invariant_under_monotone_transform(s in arb_scored()) {
            let t: Vec<(f64, bool)> = s.iter().map(|&(x, y)| ((x * 0.7 + 0.3).exp(), y)).collect();
            prop_assert_eq!(auroc(&s).map(|a| (a * 1e9).round()), auroc(&t).map(|a| (a * 1e9).round()));
            prop_assert_eq!(auprc(&s).map(|a| (a * 1e9).round()), auprc(&t).map(|a| (a * 1e9).round()));
        }
    }
}
