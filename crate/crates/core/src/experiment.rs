//! Glue shared by the command line and the examples: preparing splits, running a set of
//! methods through the missing-rate sweep, and the ablation studies.

use std::str::FromStr;

use crate::data::{split_dataset, Dataset, Sample, SplitFractions, Splits, Standardizer};
use crate::error::{Error, Result};
use crate::evalkit::{attach_deltas, sweep_missing_rates, EvalReport, SweepConfig};
use crate::model::Predictor;
use crate::train::{train_method, Method, TrainConfig, TrainLog, TrainedModel};

/// Uses the split tags stored with the data when every sample has one, otherwise draws a
/// stratified split with `seed`.
pub fn resolve_splits(ds: &Dataset, seed: u64) -> Result<Splits> {
    if ds.samples.iter().all(|s| s.split.is_some()) {
        Splits::from_tags(ds)
    } else {
        split_dataset(ds, SplitFractions::default(), seed)
    }
}

/// Fits clinical standardization on the training split and applies it to all three.
pub fn standardize_splits(raw: &Splits) -> Result<(Splits, Standardizer)> {
    let st = Standardizer::fit(&raw.train)?;
    let mut out = raw.clone();
    for ds in [&mut out.train, &mut out.val, &mut out.test] {
        st.apply(ds)?;
    }
    Ok((out, st))
}

/// Applies a stored standardizer to a raw dataset.
pub fn standardized(ds: &Dataset, st: &Standardizer) -> Result<Dataset> {
    let mut out = ds.clone();
    st.apply(&mut out)?;
    Ok(out)
}

/// Reports a model under a different method name.
pub struct Relabel<'a> {
    pub name: String,
    pub inner: &'a dyn Predictor,
}

impl Predictor for Relabel<'_> {
    fn method(&self) -> &str {
        &self.name
    }
    fn predict(&self, sample: &Sample) -> Result<Vec<f64>> {
        self.inner.predict(sample)
    }
}

/// One trained model per method, all from the same (standardized) splits.
pub fn train_methods(
    methods: &[Method],
    splits: &Splits,
    cfg: &TrainConfig,
) -> Result<Vec<(TrainedModel, Vec<(String, TrainLog)>)>> {
    methods
        .iter()
        .map(|&m| train_method(m, &splits.train, &splits.val, cfg))
        .collect()
}

/// Trains every method once per training seed and sweeps each on the test split. Rows of
/// a training seed carry that seed; the missingness mask uses the same seed, so every
/// method of one seed sees identical masks.
pub fn compare_methods(
    methods: &[Method],
    splits: &Splits,
    base: &TrainConfig,
    train_seeds: &[u64],
    sweep: &SweepConfig,
) -> Result<Vec<EvalReport>> {
    let mut reports = Vec::new();
    for &seed in train_seeds {
        let cfg = TrainConfig { seed, ..base.clone() };
        let trained = train_methods(methods, splits, &cfg)?;
        let preds: Vec<&dyn Predictor> = trained.iter().map(|(m, _)| m.predictor()).collect();
        let sc = SweepConfig {
            seeds: vec![seed],
            role: base.missing_role,
            ..sweep.clone()
        };
        reports.extend(sweep_missing_rates(&preds, &splits.test, &sc)?);
    }
    Ok(order_rows(reports))
}

/// Method (first appearance), then rate, then seed.
fn order_rows(mut reports: Vec<EvalReport>) -> Vec<EvalReport> {
    let mut methods: Vec<String> = Vec::new();
    for r in &reports {
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
    }
    reports.sort_by(|a, b| {
        let ia = methods.iter().position(|m| *m == a.method);
        let ib = methods.iter().position(|m| *m == b.method);
        ia.cmp(&ib)
            .then(a.missing_rate.total_cmp(&b.missing_rate))
            .then(a.seed.cmp(&b.seed))
    });
    attach_deltas(&mut reports, "filling");
    reports
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Study {
    /// Which distillation directions are switched on.
    Directions,
    PromptLength,
    Lambda,
}

impl Study {
    pub const ALL: [Study; 3] = [Study::Directions, Study::PromptLength, Study::Lambda];

    pub fn as_str(self) -> &'static str {
        match self {
            Study::Directions => "directions",
            Study::PromptLength => "prompt-length",
            Study::Lambda => "lambda",
        }
    }

    /// Missing rates evaluated when the caller does not choose.
    pub fn default_rates(self) -> Vec<f64> {
        match self {
            Study::Directions => vec![0.0, 0.8],
            Study::PromptLength | Study::Lambda => vec![0.0, 0.5, 0.8, 1.0],
        }
    }

    /// Named training configurations derived from `base`.
    pub fn variants(self, base: &TrainConfig) -> Vec<(String, TrainConfig)> {
        let with = |f: &dyn Fn(&mut TrainConfig)| {
            let mut c = base.clone();
            f(&mut c);
            c
        };
        match self {
            Study::Directions => vec![
                ("neither".into(), with(&|c| (c.lambda_m, c.lambda_s) = (0.0, 0.0))),
                ("s2m".into(), with(&|c| c.lambda_s = 0.0)),
                ("m2s".into(), with(&|c| c.lambda_m = 0.0)),
                ("both".into(), base.clone()),
            ],
            Study::PromptLength => PROMPT_LENGTHS
                .iter()
                .map(|&p| (format!("prompt{p}"), with(&|c| c.prompt_length = p)))
                .collect(),
            Study::Lambda => {
                let mut v: Vec<(String, TrainConfig)> = LAMBDA_GRID
                    .iter()
                    .map(|&l| (format!("lambda_m={l}"), with(&|c| c.lambda_m = l)))
                    .collect();
                v.extend(
                    LAMBDA_GRID
                        .iter()
                        .map(|&l| (format!("lambda_s={l}"), with(&|c| c.lambda_s = l))),
                );
                v
            }
        }
    }
}

pub const PROMPT_LENGTHS: [usize; 5] = [10, 25, 50, 100, 200];
pub const LAMBDA_GRID: [f64; 4] = [0.2, 0.4, 0.6, 0.8];

impl FromStr for Study {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Study::ALL.into_iter().find(|x| x.as_str() == s).ok_or_else(|| {
            let valid: Vec<&str> = Study::ALL.iter().map(|x| x.as_str()).collect();
            Error::Usage(format!("unknown study {s:?}; valid: {}", valid.join(", ")))
        })
    }
}

/// Trains every variant of `study` per training seed and sweeps them; rows are labelled
/// with the variant name.
pub fn run_study(
    study: Study,
    splits: &Splits,
    base: &TrainConfig,
    train_seeds: &[u64],
    sweep: &SweepConfig,
) -> Result<Vec<EvalReport>> {
    let mut reports = Vec::new();
    for &seed in train_seeds {
        for (name, cfg) in study.variants(&TrainConfig { seed, ..base.clone() }) {
            let (model, _) = train_method(Method::Bd, &splits.train, &splits.val, &cfg)?;
            let named = Relabel {
                name,
                inner: model.predictor(),
            };
            let sc = SweepConfig {
                seeds: vec![seed],
                role: base.missing_role,
                ..sweep.clone()
            };
            reports.extend(sweep_missing_rates(&[&named], &splits.test, &sc)?);
        }
    }
    Ok(order_rows(reports))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn study_variants() {
        let base = TrainConfig::default();
        let d = Study::Directions.variants(&base);
        let w: Vec<(&str, f64, f64)> = d.iter().map(|(n, c)| (n.as_str(), c.lambda_m, c.lambda_s)).collect();
        assert_eq!(
            w,
            vec![("neither", 0.0, 0.0), ("s2m", 0.6, 0.0), ("m2s", 0.0, 0.5), ("both", 0.6, 0.5)]
        );
        let p: Vec<usize> = Study::PromptLength.variants(&base).iter().map(|(_, c)| c.prompt_length).collect();
        assert_eq!(p, vec![10, 25, 50, 100, 200]);
        let l = Study::Lambda.variants(&base);
        assert_eq!(l.len(), 8);
        assert!(l[..4].iter().all(|(_, c)| c.lambda_s == 0.5));
        assert!(l[4..].iter().all(|(_, c)| c.lambda_m == 0.6));
        assert!(matches!("bogus".parse::<Study>(), Err(Error::Usage(_))));
    }
}
