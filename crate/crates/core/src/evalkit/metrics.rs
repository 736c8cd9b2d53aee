use crate::error::{Error, Result};
use crate::numcore::RngStream;

fn class_counts(labels: &[usize]) -> Result<(u64, u64)> {
    let pos = labels.iter().filter(|&&y| y == 1).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "need both classes, got {pos} positive and {neg} negative"
        )));
    }
    Ok((pos, neg))
}

fn check_lengths(scores: &[f64], labels: &[usize]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::dim("metric", (1, scores.len()), (1, labels.len())));
    }
    if let Some(&y) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::Data(format!("label {y} is not binary")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("scores must be finite".into()));
    }
    Ok(())
}

/// Mann–Whitney AUC: `(concordant + ½·tied) / (n₊·n₋)` over positive/negative pairs.
///
/// Pair counts are accumulated as integers, so the result is the exact ratio.
pub fn auc(scores: &[f64], labels: &[usize]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let (n_pos, n_neg) = class_counts(labels)?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Walk groups of equal scores in ascending order.
    let mut twice = 0u64; // 2·concordant + tied
    let mut neg_below = 0u64;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        let (mut gp, mut gn) = (0u64, 0u64);
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            if labels[idx[j]] == 1 {
                gp += 1;
            } else {
                gn += 1;
            }
            j += 1;
        }
        twice += gp * (2 * neg_below + gn);
        neg_below += gn;
        i = j;
    }
    Ok(twice as f64 / (2 * n_pos * n_neg) as f64)
}

/// Hard predictions: positive when the score reaches `threshold`.
pub fn threshold_predictions(scores: &[f64], threshold: f64) -> Vec<usize> {
    scores.iter().map(|&s| usize::from(s >= threshold)).collect()
}

/// Unweighted mean over both classes of per-class F1; 0/0 precision or recall counts as 0.
///
/// Per-class F1 is the ratio `2tp / (2tp + fp + fn)`; the mean of the two ratios is formed
/// in integers and divided once, so the result is the correctly rounded exact value.
pub fn f1_from_predictions(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::dim("f1_macro", (1, predictions.len()), (1, labels.len())));
    }
    class_counts(labels)?;
    let mut ratio = [(0u128, 1u128); 2];
    for (class, slot) in ratio.iter_mut().enumerate() {
        let (mut tp, mut fp, mut fn_) = (0u128, 0u128, 0u128);
        for (&p, &y) in predictions.iter().zip(labels) {
            match (p == class, y == class) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        // Both classes occur in `labels`, so the denominator is positive.
        *slot = (2 * tp, 2 * tp + fp + fn_);
    }
    let [(n0, d0), (n1, d1)] = ratio;
    Ok((n0 * d1 + n1 * d0) as f64 / (2 * d0 * d1) as f64)
}

pub fn f1_macro(scores: &[f64], labels: &[usize], threshold: f64) -> Result<f64> {
    check_lengths(scores, labels)?;
    f1_from_predictions(&threshold_predictions(scores, threshold), labels)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Auc,
    F1,
}

impl Metric {
    pub fn eval(self, scores: &[f64], labels: &[usize]) -> Result<f64> {
        match self {
            Metric::Auc => auc(scores, labels),
            Metric::F1 => f1_macro(scores, labels, DEFAULT_THRESHOLD),
        }
    }
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_CONFIDENCE: f64 = 0.975;
pub const DEFAULT_RESAMPLES: usize = 1000;

fn check_skips(skipped: usize, resamples: usize) -> Result<()> {
    if 2 * skipped > resamples {
        return Err(Error::UndefinedMetric(format!(
            "{skipped} of {resamples} bootstrap resamples contained a single class"
        )));
    }
    Ok(())
}

/// Linear interpolation between order statistics, `q` in [0, 1].
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Two-sided percentile bootstrap interval at level `confidence`. Resamples drawing a single
/// class are skipped; if more than half are skipped the metric is undefined.
pub fn bootstrap_ci(
    scores: &[f64],
    labels: &[usize],
    metric: Metric,
    confidence: f64,
    resamples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    bootstrap_ci_with(scores, labels, metric, confidence, resamples, &RngStream::new(seed).substream("bootstrap"))
}

pub fn bootstrap_ci_with(
    scores: &[f64],
    labels: &[usize],
    metric: Metric,
    confidence: f64,
    resamples: usize,
    rng: &RngStream,
) -> Result<(f64, f64)> {
    if resamples < 100 {
        return Err(Error::Config(format!("bootstrap needs >= 100 resamples, got {resamples}")));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::Config(format!("confidence must lie in (0, 1), got {confidence}")));
    }
    check_lengths(scores, labels)?;
    class_counts(labels)?;
    let n = scores.len();
    let mut r = rng.clone();
    let mut values = Vec::with_capacity(resamples);
    let mut skipped = 0usize;
    let mut s = vec![0.0; n];
    let mut y = vec![0usize; n];
    for _ in 0..resamples {
        for k in 0..n {
            let i = r.below(n);
            s[k] = scores[i];
            y[k] = labels[i];
        }
        match metric.eval(&s, &y) {
            Ok(v) => values.push(v),
            Err(Error::UndefinedMetric(_)) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    check_skips(skipped, resamples)?;
    values.sort_by(f64::total_cmp);
    let tail = (1.0 - confidence) / 2.0;
    Ok((percentile(&values, tail), percentile(&values, 1.0 - tail)))
}
