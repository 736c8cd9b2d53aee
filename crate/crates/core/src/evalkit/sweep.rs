use serde::{Deserialize, Serialize};

use super::metrics::{auc, bootstrap_ci_with, f1_macro, Metric, DEFAULT_CONFIDENCE, DEFAULT_RESAMPLES, DEFAULT_THRESHOLD};
use crate::data::{apply_missingness, Dataset, Modality};
use crate::error::{Error, Result};
use crate::model::Predictor;
use crate::numcore::RngStream;

/// Metrics of one method on one masked test set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub missing_rate: f64,
    pub seed: u64,
    pub auc: f64,
    pub f1: f64,
    /// Bootstrap interval of the AUC.
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_test: usize,
    /// Differences against the Filling row with the same rate and seed, when present.
    pub delta_auc: Option<f64>,
    pub delta_f1: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub rates: Vec<f64>,
    pub seeds: Vec<u64>,
    pub role: Modality,
    pub confidence: f64,
    pub resamples: usize,
    pub threshold: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            rates: vec![0.0, 0.5, 0.8, 1.0],
            seeds: vec![1],
            role: Modality::Clinical,
            confidence: DEFAULT_CONFIDENCE,
            resamples: DEFAULT_RESAMPLES,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

/// Positive-class probability of every sample.
pub fn positive_scores(model: &dyn Predictor, ds: &Dataset) -> Result<Vec<f64>> {
    ds.samples
        .iter()
        .map(|s| {
            let p = model.predict(s)?;
            p.get(1)
                .copied()
                .ok_or_else(|| Error::dim("predict", (1, p.len()), (1, 2)))
        })
        .collect()
}

/// Point metrics plus the AUC bootstrap interval, widened if needed to contain the point.
pub fn evaluate_scores(
    method: &str,
    scores: &[f64],
    labels: &[usize],
    rate: f64,
    seed: u64,
    cfg: &SweepConfig,
) -> Result<EvalReport> {
    let a = auc(scores, labels)?;
    let f = f1_macro(scores, labels, cfg.threshold)?;
    let rng = RngStream::new(seed)
        .substream("bootstrap")
        .substream(method)
        .substream(&format!("{rate}"));
    let (lo, hi) = bootstrap_ci_with(scores, labels, Metric::Auc, cfg.confidence, cfg.resamples, &rng)?;
    Ok(EvalReport {
        method: method.to_string(),
        missing_rate: rate,
        seed,
        auc: a,
        f1: f,
        ci_low: lo.min(a),
        ci_high: hi.max(a),
        n_test: labels.len(),
        delta_auc: None,
        delta_f1: None,
    })
}

/// Evaluates every model at every (rate, seed). Masks for one seed are nested across rates.
/// Rows come out ordered by method, then rate, then seed.
pub fn sweep_missing_rates(models: &[&dyn Predictor], test: &Dataset, cfg: &SweepConfig) -> Result<Vec<EvalReport>> {
    if let Some(r) = cfg.rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(Error::Usage(format!("missing rate {r} outside [0, 1]")));
    }
    let labels = test.labels();
    let mut masked = Vec::with_capacity(cfg.rates.len() * cfg.seeds.len());
    for &rate in &cfg.rates {
        for &seed in &cfg.seeds {
            masked.push((rate, seed, apply_missingness(test, rate, cfg.role, seed)?));
        }
    }
    let mut reports = Vec::new();
    for model in models {
        for (rate, seed, ds) in &masked {
            let scores = positive_scores(*model, ds)?;
            reports.push(evaluate_scores(model.method(), &scores, &labels, *rate, *seed, cfg)?);
        }
    }
    attach_deltas(&mut reports, "filling");
    Ok(reports)
}

/// Fills Δ columns against the `reference` method's row for the same rate and seed.
pub fn attach_deltas(reports: &mut [EvalReport], reference: &str) {
    let refs: Vec<(f64, u64, f64, f64)> = reports
        .iter()
        .filter(|r| r.method == reference)
        .map(|r| (r.missing_rate, r.seed, r.auc, r.f1))
        .collect();
    for r in reports.iter_mut() {
        if let Some(&(_, _, a, f)) = refs
            .iter()
            .find(|(rate, seed, _, _)| *rate == r.missing_rate && *seed == r.seed)
        {
            r.delta_auc = Some(r.auc - a);
            r.delta_f1 = Some(r.f1 - f);
        }
    }
}

/// Mean AUC and F1 over seeds, per (method, rate), in first-appearance order.
pub fn mean_rows(reports: &[EvalReport]) -> Vec<(String, f64, f64, f64)> {
    let mut keys: Vec<(String, f64)> = Vec::new();
    for r in reports {
        if !keys.iter().any(|(m, x)| *m == r.method && *x == r.missing_rate) {
            keys.push((r.method.clone(), r.missing_rate));
        }
    }
    keys.into_iter()
        .map(|(m, rate)| {
            let rows: Vec<&EvalReport> = reports
                .iter()
                .filter(|r| r.method == m && r.missing_rate == rate)
                .collect();
            let n = rows.len() as f64;
            let a = rows.iter().map(|r| r.auc).sum::<f64>() / n;
            let f = rows.iter().map(|r| r.f1).sum::<f64>() / n;
            (m, rate, a, f)
        })
        .collect()
}
