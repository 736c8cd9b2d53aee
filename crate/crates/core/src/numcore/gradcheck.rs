use super::params::ParamHost;
use crate::error::{Error, Result};

/// Worst-case agreement between analytic and central-difference gradients for one parameter.
#[derive(Clone, Debug)]
pub struct GradCheckEntry {
    pub name: String,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub worst_index: usize,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub tol: f64,
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_err).fold(0.0, f64::max)
    }

    pub fn failures(&self) -> Vec<&GradCheckEntry> {
        self.entries.iter().filter(|e| !e.passed).collect()
    }
}

/// Floor on the relative-error denominator; below it differences count as absolute.
/// Central differences at eps = 1e-6 carry roughly 1e-10 of rounding noise, so smaller
/// gradients cannot be resolved relatively.
const REL_FLOOR: f64 = 1e-5;

/// Compares the analytic gradients already stored in `host` against central differences
/// of `loss_fn`. Only parameters whose qualified name (`store/param`) passes `select`
/// are checked.
pub fn grad_check<H, F>(
    host: &mut H,
    mut loss_fn: F,
    eps: f64,
    tol: f64,
    select: impl Fn(&str) -> bool,
) -> Result<GradCheckReport>
where
    H: ParamHost + ?Sized,
    F: FnMut(&H) -> Result<f64>,
{
    if !(1e-7..=1e-4).contains(&eps) {
        return Err(Error::Config(format!("grad_check eps must lie in [1e-7, 1e-4], got {eps}")));
    }
    let base = loss_fn(host)?;
    if !base.is_finite() {
        return Err(Error::Numeric("loss is not finite at the base point".into()));
    }

    // (store index, param index, qualified name, analytic gradient)
    let mut targets = Vec::new();
    for (si, (label, store)) in host.stores().into_iter().enumerate() {
        for (pi, p) in store.iter().enumerate() {
            let q = format!("{label}/{}", p.name);
            if select(&q) {
                targets.push((si, pi, q, p.grad.as_slice().to_vec()));
            }
        }
    }

    let mut entries = Vec::with_capacity(targets.len());
    for (si, pi, name, analytic) in targets {
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        let mut worst = 0;
        for (k, &a) in analytic.iter().enumerate() {
            let orig = nudge(host, si, pi, k, None);
            nudge(host, si, pi, k, Some(orig + eps));
            let plus = loss_fn(host)?;
            nudge(host, si, pi, k, Some(orig - eps));
            let minus = loss_fn(host)?;
            nudge(host, si, pi, k, Some(orig));
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss while perturbing {name}[{k}]")));
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(REL_FLOOR);
            if rel > max_rel {
                max_rel = rel;
                worst = k;
            }
            max_abs = max_abs.max(abs);
        }
        entries.push(GradCheckEntry {
            name,
            max_rel_err: max_rel,
            max_abs_err: max_abs,
            worst_index: worst,
            passed: max_rel < tol,
        });
    }
    Ok(GradCheckReport { tol, entries })
}

/// Reads element `k` of parameter `pi` in store `si`, optionally overwriting it.
fn nudge<H: ParamHost + ?Sized>(host: &mut H, si: usize, pi: usize, k: usize, set: Option<f64>) -> f64 {
    let mut stores = host.stores_mut();
    let store = &mut stores[si].1;
    let p = store.iter_mut().nth(pi).expect("parameter index");
    let slot = &mut p.value.as_mut_slice()[k];
    let old = *slot;
    if let Some(v) = set {
        *slot = v;
    }
    old
}
