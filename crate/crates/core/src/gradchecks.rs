//! Finite-difference checks of every hand-written backward pass on a tiny model.
//!
//! Besides the numeric comparison, each case can carry a contract: parameters whose
//! analytic gradient must be exactly zero (detached teachers, the prompt-only mask).

use crate::baselines::{FeatureAutoencoder, FillingModel, UnimodalNet};
use crate::data::{Modality, Sample};
use crate::error::Result;
use crate::losses::{mul_loss, mul_loss_backward, sgl_f_backward, sgl_loss_backward, sgl_masked_surrogate, LossWeights};
use crate::model::{is_prompt_param, BdModel, ModelConfig};
use crate::numcore::{grad_check, DenseArray, GradCheckReport, ParamHost, ParamStore, RngStream};

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub eps: f64,
    pub tol: f64,
    pub seed: u64,
    /// Perturb one analytic gradient before comparing; every numeric case must then fail.
    pub corrupt: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-6,
            tol: 1e-4,
            seed: 0,
            corrupt: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CaseResult {
    pub name: String,
    pub report: GradCheckReport,
    /// Parameters that should have had zero gradient but did not.
    pub contract_violations: Vec<String>,
}

impl CaseResult {
    pub fn passed(&self) -> bool {
        self.report.passed() && self.contract_violations.is_empty()
    }
}

/// Small enough for central differences over every weight.
pub fn tiny_config(missing_role: Modality) -> ModelConfig {
    ModelConfig {
        d_w: 3,
        d_c: 3,
        d_h: 4,
        attn_hidden: 3,
        expansion: 2,
        prompt_length: 3,
        prompt_hidden: (4, 3),
        proj_dim: 3,
        n_classes: 2,
        missing_role,
    }
}

fn tiny_sample(cfg: &ModelConfig, rng: &mut RngStream) -> Result<Sample> {
    let rows: Vec<Vec<f64>> = (0..4).map(|_| (0..cfg.d_w).map(|_| rng.normal()).collect()).collect();
    let clinical: Vec<f64> = (0..cfg.d_c).map(|_| rng.normal()).collect();
    Sample::new("probe", 1, DenseArray::from_rows(&rows)?, Some(clinical))
}

fn nonzero_grads(store: &ParamStore, label: &str, keep: impl Fn(&str) -> bool) -> Vec<String> {
    store
        .iter()
        .filter(|p| keep(&p.name) && p.grad.as_slice().iter().any(|&g| g != 0.0))
        .map(|p| format!("{label}/{}", p.name))
        .collect()
}

/// Biases start at zero, which puts whole hidden layers exactly on a ReLU kink for some
/// inputs; central differences are meaningless there.
fn jitter_biases<H: ParamHost + ?Sized>(host: &mut H, rng: &mut RngStream) {
    for (_, store) in host.stores_mut() {
        for p in store.iter_mut() {
            if p.name.ends_with(".b") {
                for v in p.value.as_mut_slice() {
                    *v = 0.1 * rng.normal();
                }
            }
        }
    }
}

fn corrupt_first<H: ParamHost + ?Sized>(host: &mut H, select: &dyn Fn(&str) -> bool) {
    for (label, store) in host.stores_mut() {
        for p in store.iter_mut() {
            if select(&format!("{label}/{}", p.name)) {
                let g = &mut p.grad.as_mut_slice()[0];
                *g = *g * 1.5 + 1e-2;
                return;
            }
        }
    }
}

fn check<H, F>(host: &mut H, loss: F, select: impl Fn(&str) -> bool, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    H: ParamHost,
    F: FnMut(&H) -> Result<f64>,
{
    if opts.corrupt {
        corrupt_first(host, &select);
    }
    grad_check(host, loss, opts.eps, opts.tol, select)
}

fn multi_case(role: Modality, opts: &GradCheckOptions) -> Result<CaseResult> {
    let cfg = tiny_config(role);
    let root = RngStream::new(opts.seed);
    let mut m = BdModel::new(&cfg, &root)?;
    jitter_biases(&mut m, &mut root.substream("jitter"));
    let s = tiny_sample(&cfg, &mut root.substream("probe"))?;
    let w = LossWeights::default();
    m.zero_all_grads();
    mul_loss_backward(&mut m.multi, &mut m.single, &s, &w, 1.0)?;
    let contract = nonzero_grads(m.single.store(), "single", |n| !n.starts_with("proj."));
    let select = |q: &str| q.starts_with("multi/") || q.starts_with("single/proj.");
    let report = check(&mut m, |h: &BdModel| Ok(mul_loss(&h.multi, &h.single, &s, &w)?.total), select, opts)?;
    Ok(CaseResult {
        name: format!("multi-objective role={role}"),
        report,
        contract_violations: contract,
    })
}

fn single_case(role: Modality, opts: &GradCheckOptions) -> Result<CaseResult> {
    let cfg = tiny_config(role);
    let root = RngStream::new(opts.seed);
    let mut m = BdModel::new(&cfg, &root)?;
    jitter_biases(&mut m, &mut root.substream("jitter"));
    let s = tiny_sample(&cfg, &mut root.substream("probe"))?;
    let w = LossWeights::default();
    m.zero_all_grads();
    sgl_loss_backward(&mut m.single, &m.multi, &s, &w, 1.0)?;
    let contract = nonzero_grads(m.multi.store(), "multi", |_| true);
    let base = m.single.clone();
    let multi = m.multi.clone();
    let report = check(
        &mut m.single,
        |cand| sgl_masked_surrogate(cand, &base, &multi, &s, &w),
        |_| true,
        opts,
    )?;
    Ok(CaseResult {
        name: format!("single-objective role={role}"),
        report,
        contract_violations: contract,
    })
}

/// Distillation alone may only reach the prompt path.
fn mask_case(role: Modality, opts: &GradCheckOptions) -> Result<CaseResult> {
    let cfg = tiny_config(role);
    let root = RngStream::new(opts.seed);
    let mut m = BdModel::new(&cfg, &root)?;
    jitter_biases(&mut m, &mut root.substream("jitter"));
    let s = tiny_sample(&cfg, &mut root.substream("probe"))?;
    m.zero_all_grads();
    sgl_f_backward(&mut m.single, &m.multi, &s, LossWeights::default().tau)?;
    let mut contract = nonzero_grads(m.single.store(), "single", |n| !is_prompt_param(n));
    contract.extend(nonzero_grads(m.multi.store(), "multi", |_| true));
    if nonzero_grads(m.single.store(), "single", is_prompt_param).is_empty() {
        contract.push("single/prompt path received no gradient".into());
    }
    Ok(CaseResult {
        name: format!("distillation mask role={role}"),
        report: GradCheckReport {
            tol: opts.tol,
            entries: Vec::new(),
        },
        contract_violations: contract,
    })
}

fn filling_case(opts: &GradCheckOptions) -> Result<CaseResult> {
    let cfg = tiny_config(Modality::Clinical);
    let root = RngStream::new(opts.seed);
    let mut f = FillingModel::new(&cfg, &root)?;
    jitter_biases(&mut f, &mut root.substream("jitter"));
    let s = tiny_sample(&cfg, &mut root.substream("probe"))?;
    f.zero_all_grads();
    f.loss_backward(&s, 1.0)?;
    let report = check(&mut f, |h: &FillingModel| h.loss(&s), |_| true, opts)?;
    Ok(CaseResult {
        name: "filling cross-entropy".into(),
        report,
        contract_violations: Vec::new(),
    })
}

fn ae_case(opts: &GradCheckOptions) -> Result<CaseResult> {
    let mut r = RngStream::new(opts.seed).substream("ae");
    let mut ae = FeatureAutoencoder::new(4, 3, 5, &mut r)?;
    jitter_biases(&mut ae, &mut r);
    let x: Vec<f64> = (0..4).map(|_| r.normal()).collect();
    let t: Vec<f64> = (0..3).map(|_| r.normal()).collect();
    ae.zero_all_grads();
    ae.loss_backward(&x, &t, 1.0)?;
    let report = check(&mut ae, |h: &FeatureAutoencoder| h.loss(&x, &t), |_| true, opts)?;
    Ok(CaseResult {
        name: "autoencoder mse".into(),
        report,
        contract_violations: Vec::new(),
    })
}

fn unimodal_case(modality: Modality, opts: &GradCheckOptions) -> Result<CaseResult> {
    let cfg = tiny_config(Modality::Clinical);
    let root = RngStream::new(opts.seed);
    let mut net = UnimodalNet::new(&cfg, modality, &mut root.substream(modality.as_str()))?;
    jitter_biases(&mut net, &mut root.substream("jitter"));
    let s = tiny_sample(&cfg, &mut root.substream("probe"))?;
    net.zero_all_grads();
    net.loss_backward(&s, 1.0)?;
    let report = check(&mut net, |h: &UnimodalNet| h.loss(&s), |_| true, opts)?;
    Ok(CaseResult {
        name: format!("{modality}-only cross-entropy"),
        report,
        contract_violations: Vec::new(),
    })
}

pub fn run_gradchecks(opts: &GradCheckOptions) -> Result<Vec<CaseResult>> {
    let mut out = Vec::new();
    for role in [Modality::Clinical, Modality::Image] {
        out.push(multi_case(role, opts)?);
        out.push(single_case(role, opts)?);
        out.push(mask_case(role, opts)?);
    }
    out.push(filling_case(opts)?);
    out.push(ae_case(opts)?);
    out.push(unimodal_case(Modality::Image, opts)?);
    out.push(unimodal_case(Modality::Clinical, opts)?);
    Ok(out)
}

pub fn render_results(results: &[CaseResult]) -> String {
    let mut s = String::new();
    for r in results {
        s.push_str(&format!(
            "{:<4} {:<34} params={:<3} max_rel_err={:.3e}\n",
            if r.passed() { "ok" } else { "FAIL" },
            r.name,
            r.report.entries.len(),
            r.report.max_rel_err()
        ));
        for e in r.report.failures() {
            s.push_str(&format!("     {} rel={:.3e} at [{}]\n", e.name, e.max_rel_err, e.worst_index));
        }
        for v in &r.contract_violations {
            s.push_str(&format!("     nonzero gradient where none is allowed: {v}\n"));
        }
    }
    s
}
