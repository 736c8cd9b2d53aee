//! Training loops: the alternating two-branch schedule, the supervised loops behind the
//! baselines, early stopping and training logs.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{check_alpha, AeModel, EnsembleModel, FillingModel, UnimodalNet};
use crate::checkpoint::Checkpoint;
use crate::data::{Dataset, Modality, Sample};
use crate::error::{Error, Result};
use crate::evalkit::{f1_macro, positive_scores, DEFAULT_THRESHOLD};
use crate::losses::{mul_loss_backward, sgl_f_backward, sgl_loss_backward, LossBundle, LossWeights};
use crate::model::{is_prompt_param, BdModel, ModelConfig, MultiOnly, Predictor, SingleOnly};
use crate::numcore::{sgd_step, ParamHost, RngStream, SgdConfig, SgdState};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Monitor {
    #[default]
    #[serde(rename = "val-F1")]
    ValF1,
    #[serde(rename = "train-F1")]
    TrainF1,
}

impl Monitor {
    pub fn as_str(self) -> &'static str {
        match self {
            Monitor::ValF1 => "val-F1",
            Monitor::TrainF1 => "train-F1",
        }
    }
}

impl FromStr for Monitor {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "val-F1" | "val-f1" | "val" => Ok(Monitor::ValF1),
            "train-F1" | "train-f1" | "train" => Ok(Monitor::TrainF1),
            _ => Err(Error::Config(format!("monitor must be val-F1 or train-F1, got {s}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda_m: f64,
    pub lambda_s: f64,
    pub tau: f64,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub prompt_length: usize,
    pub max_epochs: usize,
    /// Non-improving epochs tolerated before stopping.
    pub patience: usize,
    pub monitor: Monitor,
    pub seed: u64,
    pub missing_role: Modality,
    pub expansion: usize,
    pub d_h: usize,
    /// Bags per optimizer step (gradients are averaged).
    pub batch_size: usize,
    pub ensemble_alpha: f64,
    /// Compare parameter digests around every step and fail on any leak.
    pub verify_freezing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_m: 0.6,
            lambda_s: 0.5,
            tau: 1.2,
            lr: 1e-4,
            momentum: 0.3,
            weight_decay: 1e-3,
            prompt_length: 50,
            max_epochs: 50,
            patience: 10,
            monitor: Monitor::ValF1,
            seed: 0,
            missing_role: Modality::Clinical,
            expansion: 20,
            d_h: 128,
            batch_size: 1,
            ensemble_alpha: 0.5,
            verify_freezing: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss_weights().validate()?;
        self.sgd().validate()?;
        for (name, v) in [
            ("prompt_length", self.prompt_length),
            ("max_epochs", self.max_epochs),
            ("expansion", self.expansion),
            ("d_h", self.d_h),
            ("batch_size", self.batch_size),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        check_alpha(self.ensemble_alpha)
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            lambda_m: self.lambda_m,
            lambda_s: self.lambda_s,
            tau: self.tau,
        }
    }

    pub fn sgd(&self) -> SgdConfig {
        SgdConfig {
            lr: self.lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
        }
    }

    pub fn model_config(&self, d_w: usize, d_c: usize) -> ModelConfig {
        ModelConfig {
            d_w,
            d_c,
            d_h: self.d_h,
            expansion: self.expansion,
            prompt_length: self.prompt_length,
            missing_role: self.missing_role,
            ..ModelConfig::default()
        }
    }

    fn root_rng(&self) -> RngStream {
        RngStream::new(self.seed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mul_c: f64,
    pub mul_f: f64,
    pub sgl_c: f64,
    pub sgl_f: f64,
    pub monitored: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub method: String,
    pub monitor: String,
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub stop_epoch: usize,
    pub best_metric: f64,
}

pub const TRAIN_LOG_HEADER: &str = "epoch,mul_c,mul_f,sgl_c,sgl_f,monitored_metric";

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRAIN_LOG_HEADER);
        out.push('\n');
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{:.6},{:.6},{:.6}",
                e.epoch, e.mul_c, e.mul_f, e.sgl_c, e.sgl_f, e.monitored
            );
        }
        out
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "method": self.method,
            "monitor": self.monitor,
            "best_epoch": self.best_epoch,
            "stop_epoch": self.stop_epoch,
            "best_metric": self.best_metric,
            "epochs_run": self.epochs.len(),
        })
    }
}

/// Running sums of the per-sample losses of one epoch.
#[derive(Clone, Copy, Debug, Default)]
struct EpochLoss {
    mul_c: f64,
    mul_f: f64,
    sgl_c: f64,
    sgl_f: f64,
    n: usize,
}

impl EpochLoss {
    fn add(&mut self, b: &LossBundle, count: usize) {
        let k = count as f64;
        self.mul_c += b.mul_c * k;
        self.mul_f += b.mul_f * k;
        self.sgl_c += b.sgl_c * k;
        self.sgl_f += b.sgl_f() * k;
    }

    fn record(&self, epoch: usize, monitored: f64) -> EpochRecord {
        let n = self.n.max(1) as f64;
        EpochRecord {
            epoch,
            mul_c: self.mul_c / n,
            mul_f: self.mul_f / n,
            sgl_c: self.sgl_c / n,
            sgl_f: self.sgl_f / n,
            monitored,
        }
    }
}

/// Shuffled mini-batches, early stopping on a higher-is-better metric, best-epoch restore.
/// Ties keep the earliest epoch. Stops once more than `patience` consecutive epochs fail to
/// improve.
fn run_epochs<M: Clone>(
    model: &mut M,
    method: &str,
    cfg: &TrainConfig,
    n_train: usize,
    shuffle: &mut RngStream,
    mut step: impl FnMut(&mut M, &[usize]) -> Result<LossBundle>,
    mut monitor: impl FnMut(&M) -> Result<f64>,
) -> Result<(M, TrainLog)> {
    let mut best: Option<(M, usize, f64)> = None;
    let mut epochs = Vec::new();
    let mut bad = 0usize;
    for epoch in 1..=cfg.max_epochs {
        let order = shuffle.permutation(n_train);
        let mut acc = EpochLoss::default();
        for batch in order.chunks(cfg.batch_size) {
            let b = step(model, batch)?;
            acc.add(&b, batch.len());
            acc.n += batch.len();
        }
        let metric = monitor(model)?;
        if !metric.is_finite() {
            return Err(Error::Numeric(format!("monitored metric is not finite at epoch {epoch}")));
        }
        epochs.push(acc.record(epoch, metric));
        match &best {
            Some((_, _, m)) if metric <= *m => {
                bad += 1;
                if bad > cfg.patience {
                    break;
                }
            }
            _ => {
                best = Some((model.clone(), epoch, metric));
                bad = 0;
            }
        }
    }
    let (m, best_epoch, best_metric) = best.expect("at least one epoch");
    let log = TrainLog {
        method: method.to_string(),
        monitor: cfg.monitor.as_str().to_string(),
        stop_epoch: epochs.len(),
        epochs,
        best_epoch,
        best_metric,
    };
    Ok((m, log))
}

fn require_complete(train: &Dataset) -> Result<()> {
    if train.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if let Some(s) = train.samples.iter().find(|s| !s.is_complete()) {
        return Err(Error::Data(format!(
            "training sample {} lacks a modality; training requires complete samples",
            s.id
        )));
    }
    Ok(())
}

fn monitor_set<'a>(cfg: &TrainConfig, train: &'a Dataset, val: &'a Dataset) -> Result<&'a Dataset> {
    let ds = match cfg.monitor {
        Monitor::ValF1 => val,
        Monitor::TrainF1 => train,
    };
    if ds.is_empty() {
        return Err(Error::Data(format!("{} set is empty", cfg.monitor.as_str())));
    }
    Ok(ds)
}

fn f1_of(model: &dyn Predictor, ds: &Dataset) -> Result<f64> {
    f1_macro(&positive_scores(model, ds)?, &ds.labels(), DEFAULT_THRESHOLD)
}

/// Mean of the multi-branch F1 on complete data and the single-branch F1 with the missing
/// modality withheld.
pub fn bd_monitor_metric(model: &BdModel, ds: &Dataset) -> Result<f64> {
    Ok(0.5 * (f1_of(&MultiOnly(&model.multi), ds)? + f1_of(&SingleOnly(&model.single), ds)?))
}

fn is_projection(name: &str) -> bool {
    name.starts_with("proj.")
}

/// Velocity buffers for both branches.
#[derive(Clone, Debug)]
pub struct BdOptimizer {
    pub multi: SgdState,
    pub single: SgdState,
}

impl BdOptimizer {
    pub fn new(model: &BdModel, sgd: SgdConfig) -> Result<Self> {
        Ok(Self {
            multi: SgdState::new(model.multi.store(), sgd)?,
            single: SgdState::new(model.single.store(), sgd)?,
        })
    }
}

fn scaled_sum(acc: &mut LossBundle, b: &LossBundle, k: f64) {
    acc.total += k * b.total;
    acc.mul_c += k * b.mul_c;
    acc.mul_f += k * b.mul_f;
    acc.sgl_c += k * b.sgl_c;
    acc.sgl_f_feat += k * b.sgl_f_feat;
    acc.sgl_f_kl += k * b.sgl_f_kl;
    acc.lambda_m = b.lambda_m;
    acc.lambda_s = b.lambda_s;
    acc.tau = b.tau;
}

fn ensure_grads_finite(host: &dyn ParamHost, what: &str) -> Result<()> {
    for (label, store) in host.stores() {
        if !store.grads_finite() {
            return Err(Error::Numeric(format!("non-finite gradient in {label} during {what}")));
        }
    }
    Ok(())
}

/// One update of the multi-modal branch (and the single branch's projection head) on the
/// mean multi-branch objective of `batch`. Everything else in the single branch is frozen.
pub fn train_step_multi(
    batch: &[&Sample],
    model: &mut BdModel,
    opt: &mut BdOptimizer,
    cfg: &TrainConfig,
) -> Result<LossBundle> {
    if let Some(s) = batch.iter().find(|s| !s.is_complete()) {
        return Err(Error::Data(format!("training sample {} lacks a modality", s.id)));
    }
    let w = cfg.loss_weights();
    let guard = cfg
        .verify_freezing
        .then(|| model.single.store().digest_where(|n| !is_projection(n)));
    model.zero_all_grads();
    model.multi.store_mut().set_all_trainable(true);
    model.single.store_mut().set_trainable_where(is_projection);
    let k = 1.0 / batch.len() as f64;
    let mut acc = LossBundle::default();
    for s in batch {
        let b = mul_loss_backward(&mut model.multi, &mut model.single, s, &w, k)?;
        scaled_sum(&mut acc, &b, k);
    }
    ensure_grads_finite(model, "the multi-branch step")?;
    sgd_step(model.multi.store_mut(), &mut opt.multi);
    sgd_step(model.single.store_mut(), &mut opt.single);
    model.single.store_mut().set_all_trainable(true);
    if let Some(before) = guard {
        if model.single.store().digest_where(|n| !is_projection(n)) != before {
            return Err(Error::CheckFailed("multi-branch step modified the single-modal branch".into()));
        }
    }
    Ok(acc)
}

/// One update of the single-modal branch on the mean single-branch objective of `batch`,
/// with the multi-modal branch read-only and the projection head frozen.
pub fn train_step_single(
    batch: &[&Sample],
    model: &mut BdModel,
    opt: &mut BdOptimizer,
    cfg: &TrainConfig,
) -> Result<LossBundle> {
    let w = cfg.loss_weights();
    let guard = cfg.verify_freezing.then(|| {
        (
            model.multi.store().digest(),
            model.single.store().digest_where(is_projection),
        )
    });
    if cfg.verify_freezing {
        verify_prompt_masking(batch, model, w.tau)?;
    }
    model.zero_all_grads();
    model.single.store_mut().set_trainable_where(|n| !is_projection(n));
    let k = 1.0 / batch.len() as f64;
    let mut acc = LossBundle::default();
    for s in batch {
        let b = sgl_loss_backward(&mut model.single, &model.multi, s, &w, k)?;
        scaled_sum(&mut acc, &b, k);
    }
    ensure_grads_finite(model, "the single-branch step")?;
    sgd_step(model.single.store_mut(), &mut opt.single);
    model.single.store_mut().set_all_trainable(true);
    if let Some((multi, proj)) = guard {
        if model.multi.store().digest() != multi {
            return Err(Error::CheckFailed("single-branch step modified the multi-modal branch".into()));
        }
        if model.single.store().digest_where(is_projection) != proj {
            return Err(Error::CheckFailed("single-branch step modified the projection head".into()));
        }
    }
    Ok(acc)
}

/// The distillation term alone must leave every gradient outside the prompt path at 0.0.
pub fn verify_prompt_masking(batch: &[&Sample], model: &BdModel, tau: f64) -> Result<()> {
    let mut probe = model.single.clone();
    probe.store_mut().zero_grads();
    for s in batch {
        sgl_f_backward(&mut probe, &model.multi, s, tau)?;
    }
    for p in probe.store().iter() {
        if !is_prompt_param(&p.name) && p.grad.as_slice().iter().any(|&g| g != 0.0) {
            return Err(Error::CheckFailed(format!(
                "distillation gradient leaked into single/{}",
                p.name
            )));
        }
    }
    Ok(())
}

/// Alternating schedule: for each batch, a multi-branch step then a single-branch step.
/// Returns the parameters of the best monitored epoch.
pub fn train_bd(train: &Dataset, val: &Dataset, cfg: &TrainConfig) -> Result<(BdModel, TrainLog)> {
    cfg.validate()?;
    require_complete(train)?;
    let mon = monitor_set(cfg, train, val)?;
    let mcfg = cfg.model_config(train.d_w, train.d_c);
    let root = cfg.root_rng();
    let mut model = BdModel::new(&mcfg, &root.substream("init"))?;
    let mut opt = BdOptimizer::new(&model, cfg.sgd())?;
    let mut shuffle = root.substream("shuffle");
    let (best, log) = run_epochs(
        &mut model,
        "bd",
        cfg,
        train.len(),
        &mut shuffle,
        |m, idx| {
            let batch: Vec<&Sample> = idx.iter().map(|&i| &train.samples[i]).collect();
            let a = train_step_multi(&batch, m, &mut opt, cfg)?;
            let b = train_step_single(&batch, m, &mut opt, cfg)?;
            let mut out = a;
            out.sgl_c = b.sgl_c;
            out.sgl_f_feat = b.sgl_f_feat;
            out.sgl_f_kl = b.sgl_f_kl;
            out.total = a.total + b.total;
            Ok(out)
        },
        |m| bd_monitor_metric(m, mon),
    )?;
    Ok((best, log))
}

/// A network trained by plain cross-entropy on complete samples.
trait Supervised: ParamHost + Predictor + Clone {
    fn loss_backward(&mut self, sample: &Sample, scale: f64) -> Result<f64>;
}

impl Supervised for FillingModel {
    fn loss_backward(&mut self, sample: &Sample, scale: f64) -> Result<f64> {
        FillingModel::loss_backward(self, sample, scale)
    }
}

impl Supervised for UnimodalNet {
    fn loss_backward(&mut self, sample: &Sample, scale: f64) -> Result<f64> {
        UnimodalNet::loss_backward(self, sample, scale)
    }
}

fn fit_supervised<N: Supervised>(
    mut net: N,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    tag: &str,
) -> Result<(N, TrainLog)> {
    let mon = monitor_set(cfg, train, val)?;
    let mut states: Vec<SgdState> = net
        .stores()
        .into_iter()
        .map(|(_, s)| SgdState::new(s, cfg.sgd()))
        .collect::<Result<_>>()?;
    let mut shuffle = cfg.root_rng().substream("shuffle").substream(tag);
    run_epochs(
        &mut net,
        tag,
        cfg,
        train.len(),
        &mut shuffle,
        |m, idx| {
            m.zero_all_grads();
            let k = 1.0 / idx.len() as f64;
            let mut loss = 0.0;
            for &i in idx {
                loss += k * m.loss_backward(&train.samples[i], k)?;
            }
            ensure_grads_finite(m, tag)?;
            for ((_, store), st) in m.stores_mut().into_iter().zip(states.iter_mut()) {
                sgd_step(store, st);
            }
            Ok(LossBundle {
                total: loss,
                mul_c: loss,
                ..LossBundle::default()
            })
        },
        |m| f1_of(m, mon),
    )
}

/// Autoencoder stage: stage-1 parameters stay fixed; early stopping on validation
/// reconstruction error (the log's monitored column holds the negated mean MSE).
fn fit_autoencoder(mut model: AeModel, train: &Dataset, val: &Dataset, cfg: &TrainConfig) -> Result<(AeModel, TrainLog)> {
    model.stage1()?;
    let mon = monitor_set(cfg, train, val)?;
    let mut state = SgdState::new(&model.ae.store, cfg.sgd())?;
    let mut shuffle = cfg.root_rng().substream("shuffle").substream("ae");
    let (m, mut log) = run_epochs(
        &mut model,
        "ae",
        cfg,
        train.len(),
        &mut shuffle,
        |m, idx| {
            m.ae.store.zero_grads();
            let k = 1.0 / idx.len() as f64;
            let mut loss = 0.0;
            for &i in idx {
                loss += k * m.stage2_loss_backward(&train.samples[i], k)?;
            }
            ensure_grads_finite(&m.ae, "the autoencoder step")?;
            sgd_step(&mut m.ae.store, &mut state);
            Ok(LossBundle {
                total: loss,
                mul_f: loss,
                ..LossBundle::default()
            })
        },
        |m| {
            let mut s = 0.0;
            for x in &mon.samples {
                s += m.stage2_loss(x)?;
            }
            Ok(-s / mon.len() as f64)
        },
    )?;
    log.monitor = format!("neg-recon-mse({})", cfg.monitor.as_str());
    Ok((m, log))
}

/// Every trainable method, as named on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Bd,
    Filling,
    Ae,
    Ensemble,
    ImageOnly,
    ClinicalOnly,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Bd,
        Method::Filling,
        Method::Ae,
        Method::Ensemble,
        Method::ImageOnly,
        Method::ClinicalOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Bd => "bd",
            Method::Filling => "filling",
            Method::Ae => "ae",
            Method::Ensemble => "ensemble",
            Method::ImageOnly => "image-only",
            Method::ClinicalOnly => "clinical-only",
        }
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                let valid: Vec<&str> = Method::ALL.iter().map(|m| m.as_str()).collect();
                Error::Usage(format!("unknown method {s:?}; valid: {}", valid.join(", ")))
            })
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A trained model of any method.
#[derive(Clone, Debug)]
pub enum TrainedModel {
    Bd(BdModel),
    Filling(FillingModel),
    Ae(AeModel),
    Ensemble(EnsembleModel),
    Unimodal(UnimodalNet),
}

impl TrainedModel {
    pub fn predictor(&self) -> &dyn Predictor {
        match self {
            TrainedModel::Bd(m) => m,
            TrainedModel::Filling(m) => m,
            TrainedModel::Ae(m) => m,
            TrainedModel::Ensemble(m) => m,
            TrainedModel::Unimodal(m) => m,
        }
    }

    pub fn method(&self) -> Method {
        match self {
            TrainedModel::Bd(_) => Method::Bd,
            TrainedModel::Filling(_) => Method::Filling,
            TrainedModel::Ae(_) => Method::Ae,
            TrainedModel::Ensemble(_) => Method::Ensemble,
            TrainedModel::Unimodal(m) => match m.modality() {
                Modality::Image => Method::ImageOnly,
                Modality::Clinical => Method::ClinicalOnly,
            },
        }
    }

    /// `meta` is extended with the model configuration (and the fusion weight for the
    /// ensemble); the method name becomes the checkpoint kind.
    pub fn to_checkpoint(&self, model_cfg: &ModelConfig, mut meta: serde_json::Value) -> Checkpoint {
        if !meta.is_object() {
            meta = serde_json::json!({});
        }
        meta["model"] = serde_json::to_value(model_cfg).expect("serializable config");
        let kind = self.method().as_str();
        match self {
            TrainedModel::Bd(m) => Checkpoint::from_stores(kind, meta, &m.stores()),
            TrainedModel::Filling(m) => Checkpoint::from_stores(kind, meta, &m.stores()),
            TrainedModel::Ae(m) => Checkpoint::from_stores(kind, meta, &m.stores()),
            TrainedModel::Ensemble(m) => {
                meta["ensemble_alpha"] = serde_json::json!(m.alpha);
                Checkpoint::from_stores(kind, meta, &m.stores())
            }
            TrainedModel::Unimodal(m) => Checkpoint::from_stores(kind, meta, &m.stores()),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let method: Method = ck
            .kind
            .parse()
            .map_err(|_| Error::Checkpoint(format!("unknown checkpoint kind {:?}", ck.kind)))?;
        let cfg: ModelConfig = ck.meta_field("model")?;
        let rng = RngStream::new(0);
        let restore_all = |host: &mut dyn ParamHost| -> Result<()> {
            for (label, store) in host.stores_mut() {
                ck.restore_into(label, store)?;
            }
            Ok(())
        };
        Ok(match method {
            Method::Bd => TrainedModel::Bd(BdModel::from_checkpoint(ck)?),
            Method::Filling => {
                let mut m = FillingModel::new(&cfg, &rng)?;
                restore_all(&mut m)?;
                TrainedModel::Filling(m)
            }
            Method::Ae => {
                let mut m = AeModel::new(&cfg, &rng)?;
                m.set_stage1(FillingModel::new(&cfg, &rng)?);
                restore_all(&mut m)?;
                TrainedModel::Ae(m)
            }
            Method::Ensemble => {
                let alpha: f64 = ck.meta_field("ensemble_alpha")?;
                let mut m = EnsembleModel::new(&cfg, alpha, &rng)?;
                restore_all(&mut m)?;
                TrainedModel::Ensemble(m)
            }
            Method::ImageOnly | Method::ClinicalOnly => {
                let modality = if method == Method::ImageOnly {
                    Modality::Image
                } else {
                    Modality::Clinical
                };
                let mut m = UnimodalNet::new(&cfg, modality, &mut rng.clone())?;
                restore_all(&mut m)?;
                TrainedModel::Unimodal(m)
            }
        })
    }
}

/// Trains any method. Two-part methods return one log per part, labelled.
pub fn train_method(
    method: Method,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
) -> Result<(TrainedModel, Vec<(String, TrainLog)>)> {
    match method {
        Method::Bd => {
            let (m, log) = train_bd(train, val, cfg)?;
            Ok((TrainedModel::Bd(m), vec![("bd".into(), log)]))
        }
        _ => train_baseline(method, train, val, cfg),
    }
}

/// Trains one of the reference methods with the shared optimizer and early stopping.
pub fn train_baseline(
    method: Method,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
) -> Result<(TrainedModel, Vec<(String, TrainLog)>)> {
    cfg.validate()?;
    require_complete(train)?;
    let mcfg = cfg.model_config(train.d_w, train.d_c);
    let init = cfg.root_rng().substream("init");
    match method {
        Method::Bd => Err(Error::Config("bd is not a baseline".into())),
        Method::Filling => {
            let (m, log) = fit_supervised(FillingModel::new(&mcfg, &init)?, train, val, cfg, "filling")?;
            Ok((TrainedModel::Filling(m), vec![("filling".into(), log)]))
        }
        Method::Ae => {
            let (base, log1) = fit_supervised(FillingModel::new(&mcfg, &init)?, train, val, cfg, "filling")?;
            let mut ae = AeModel::new(&mcfg, &init)?;
            ae.set_stage1(base);
            let (ae, log2) = fit_autoencoder(ae, train, val, cfg)?;
            Ok((
                TrainedModel::Ae(ae),
                vec![("stage1".into(), log1), ("stage2".into(), log2)],
            ))
        }
        Method::Ensemble => {
            let m = EnsembleModel::new(&mcfg, cfg.ensemble_alpha, &init)?;
            let (image, log_i) = fit_supervised(m.image, train, val, cfg, "ensemble-image")?;
            let (clinical, log_c) = fit_supervised(m.clinical, train, val, cfg, "ensemble-clinical")?;
            Ok((
                TrainedModel::Ensemble(EnsembleModel {
                    image,
                    clinical,
                    alpha: m.alpha,
                }),
                vec![("image".into(), log_i), ("clinical".into(), log_c)],
            ))
        }
        Method::ImageOnly | Method::ClinicalOnly => {
            let (modality, tag) = if method == Method::ImageOnly {
                (Modality::Image, "image-only")
            } else {
                (Modality::Clinical, "clinical-only")
            };
            let net = UnimodalNet::new(&mcfg, modality, &mut init.substream(tag))?;
            let (m, log) = fit_supervised(net, train, val, cfg, tag)?;
            Ok((TrainedModel::Unimodal(m), vec![(tag.into(), log)]))
        }
    }
}

/// Baseline dispatch by name, for callers holding a string kind.
pub fn train_baseline_kind(
    kind: &str,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
) -> Result<(TrainedModel, Vec<(String, TrainLog)>)> {
    match kind {
        "filling" | "ae" | "ensemble" => train_baseline(kind.parse()?, train, val, cfg),
        _ => Err(Error::Config(format!(
            "unknown baseline kind {kind:?}; valid: filling, ae, ensemble"
        ))),
    }
}
