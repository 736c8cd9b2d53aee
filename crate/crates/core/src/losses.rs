//! Training objectives of both branches.
//!
//! The multi-modal objective is classification plus feature distillation from the
//! single-modal branch (teacher side detached). The single-modal objective is
//! classification plus fused-feature and logit distillation from the frozen multi-modal
//! branch; the distillation part only ever reaches the prompt path.

use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::model::{is_prompt_param, BranchOutputs, MultiModalBranch, SingleModalBranch};
use crate::numcore::ops::{cross_entropy, cross_entropy_grad_logits, kl_temp_with_grad, mse, mse_grad};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_m: f64,
    pub lambda_s: f64,
    pub tau: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_m: 0.6,
            lambda_s: 0.5,
            tau: 1.2,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        check_lambda("lambda_m", self.lambda_m)?;
        check_lambda("lambda_s", self.lambda_s)?;
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::Config(format!("tau must be > 0, got {}", self.tau)));
        }
        Ok(())
    }
}

fn check_lambda(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
    }
    Ok(())
}

/// Sub-losses of one step. `sgl_f_kl` already carries the τ² factor.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBundle {
    pub total: f64,
    pub mul_c: f64,
    pub mul_f: f64,
    pub sgl_c: f64,
    pub sgl_f_feat: f64,
    pub sgl_f_kl: f64,
    pub lambda_m: f64,
    pub lambda_s: f64,
    pub tau: f64,
}

impl LossBundle {
    pub fn sgl_f(&self) -> f64 {
        self.sgl_f_feat + self.sgl_f_kl
    }

    pub fn is_finite(&self) -> bool {
        [self.total, self.mul_c, self.mul_f, self.sgl_c, self.sgl_f_feat, self.sgl_f_kl]
            .iter()
            .all(|v| v.is_finite())
    }
}

pub fn loss_mul_c(outputs: &BranchOutputs, label: usize) -> Result<f64> {
    cross_entropy(&outputs.probs, label)
}

pub fn loss_sgl_c(outputs: &BranchOutputs, label: usize) -> Result<f64> {
    cross_entropy(&outputs.probs, label)
}

/// MSE between the two projection heads applied to the kept-modality features.
pub fn loss_mul_f(
    multi: &MultiModalBranch,
    single: &SingleModalBranch,
    feat_multi: &[f64],
    feat_single: &[f64],
) -> Result<f64> {
    mse(&multi.project(feat_multi)?, &single.project(feat_single)?)
}

pub fn loss_mul_total(mul_c: f64, mul_f: f64, lambda_m: f64) -> Result<f64> {
    check_lambda("lambda_m", lambda_m)?;
    Ok(mul_c + lambda_m * mul_f)
}

/// Returns (fused-feature MSE, τ²·KL(student ‖ teacher)).
pub fn loss_sgl_f(single_out: &BranchOutputs, multi_out: &BranchOutputs, tau: f64) -> Result<(f64, f64)> {
    let feat = mse(&single_out.fused, &multi_out.fused)?;
    let (kl, _) = kl_temp_with_grad(&single_out.logits, &multi_out.logits, tau)?;
    Ok((feat, kl))
}

pub fn loss_sgl_total(sgl_c: f64, sgl_f: f64, lambda_s: f64) -> Result<f64> {
    check_lambda("lambda_s", lambda_s)?;
    Ok(sgl_c + lambda_s * sgl_f)
}

fn ensure_finite(b: LossBundle, what: &str) -> Result<LossBundle> {
    if b.is_finite() {
        Ok(b)
    } else {
        Err(Error::Numeric(format!("{what} loss is not finite: {b:?}")))
    }
}

/// Multi-branch objective value for one complete sample (no gradients).
pub fn mul_loss(
    multi: &MultiModalBranch,
    single: &SingleModalBranch,
    sample: &Sample,
    w: &LossWeights,
) -> Result<LossBundle> {
    let kept = multi.config().kept();
    let out = multi.forward_sample(sample)?;
    let mul_c = loss_mul_c(&out, sample.label)?;
    let teacher = single.kept_feature(sample)?;
    let mul_f = loss_mul_f(multi, single, out.feature(kept), &teacher)?;
    let total = loss_mul_total(mul_c, mul_f, w.lambda_m)?;
    ensure_finite(
        LossBundle {
            total,
            mul_c,
            mul_f,
            lambda_m: w.lambda_m,
            lambda_s: w.lambda_s,
            tau: w.tau,
            ..LossBundle::default()
        },
        "multi-branch",
    )
}

/// Accumulates gradients of the multi-branch objective into the multi-branch store and
/// the single branch's projection head. The single branch's kept-modality feature is a
/// detached target: nothing else in the single branch receives gradient.
pub fn mul_loss_backward(
    multi: &mut MultiModalBranch,
    single: &mut SingleModalBranch,
    sample: &Sample,
    w: &LossWeights,
    scale: f64,
) -> Result<LossBundle> {
    let kept = multi.config().kept();
    let (out, cache) = multi.forward_sample_cached(sample)?;
    let mul_c = loss_mul_c(&out, sample.label)?;
    let f_multi = out.feature(kept).to_vec();
    let f_single = single.kept_feature(sample)?;
    let a = multi.project(&f_multi)?;
    let b = single.project(&f_single)?;
    let mul_f = mse(&a, &b)?;
    let total = loss_mul_total(mul_c, mul_f, w.lambda_m)?;
    let bundle = ensure_finite(
        LossBundle {
            total,
            mul_c,
            mul_f,
            lambda_m: w.lambda_m,
            lambda_s: w.lambda_s,
            tau: w.tau,
            ..LossBundle::default()
        },
        "multi-branch",
    )?;

    let dlogits: Vec<f64> = cross_entropy_grad_logits(&out.probs, sample.label)
        .into_iter()
        .map(|g| g * scale)
        .collect();
    let (mut d_img, mut d_clin) = multi.classifier_backward(&out.fused, &dlogits)?;

    let k = w.lambda_m * scale;
    let da: Vec<f64> = mse_grad(&a, &b).into_iter().map(|g| g * k).collect();
    let db: Vec<f64> = da.iter().map(|g| -g).collect();
    let d_feat = multi.project_backward(&f_multi, &da)?;
    single.project_backward(&f_single, &db)?;
    let target = match kept {
        crate::data::Modality::Image => &mut d_img,
        crate::data::Modality::Clinical => &mut d_clin,
    };
    for (t, g) in target.iter_mut().zip(&d_feat) {
        *t += g;
    }
    multi.encoders_backward(&cache, &d_img, &d_clin)?;
    Ok(bundle)
}

/// Single-branch objective value for one sample whose kept modality is visible.
pub fn sgl_loss(
    single: &SingleModalBranch,
    multi: &MultiModalBranch,
    sample: &Sample,
    w: &LossWeights,
) -> Result<LossBundle> {
    let out = single.forward_sample(sample)?;
    let teacher = multi.forward_sample(sample)?;
    sgl_bundle(&out, &teacher, sample.label, w)
}

fn sgl_bundle(out: &BranchOutputs, teacher: &BranchOutputs, label: usize, w: &LossWeights) -> Result<LossBundle> {
    let sgl_c = loss_sgl_c(out, label)?;
    let (feat, kl) = loss_sgl_f(out, teacher, w.tau)?;
    let total = loss_sgl_total(sgl_c, feat + kl, w.lambda_s)?;
    ensure_finite(
        LossBundle {
            total,
            sgl_c,
            sgl_f_feat: feat,
            sgl_f_kl: kl,
            lambda_m: w.lambda_m,
            lambda_s: w.lambda_s,
            tau: w.tau,
            ..LossBundle::default()
        },
        "single-branch",
    )
}

/// Accumulates single-branch gradients. Classification reaches every single-branch
/// parameter it touches; the distillation term is cut at the fused vector and only its
/// prompt slice is propagated, so kept-modality encoder and classifier get none of it.
/// The multi-modal branch is read-only here.
pub fn sgl_loss_backward(
    single: &mut SingleModalBranch,
    multi: &MultiModalBranch,
    sample: &Sample,
    w: &LossWeights,
    scale: f64,
) -> Result<LossBundle> {
    let (out, cache) = single.forward_sample_cached(sample)?;
    let teacher = multi.forward_sample(sample)?;
    let bundle = sgl_bundle(&out, &teacher, sample.label, w)?;

    let dlogits: Vec<f64> = cross_entropy_grad_logits(&out.probs, sample.label)
        .into_iter()
        .map(|g| g * scale)
        .collect();
    let d_fused_c = single.classifier_backward(&out.fused, &dlogits)?;

    let k = w.lambda_s * scale;
    let (_, dz) = kl_temp_with_grad(&out.logits, &teacher.logits, w.tau)?;
    let dz: Vec<f64> = dz.into_iter().map(|g| g * k).collect();
    let d_fused_kl = single.classifier_input_grad(&dz)?;
    let d_fused_feat = mse_grad(&out.fused, &teacher.fused);

    let prompt = single.prompt_range();
    let d_prompt: Vec<f64> = prompt
        .clone()
        .map(|i| d_fused_c[i] + k * d_fused_feat[i] + d_fused_kl[i])
        .collect();
    let d_kept: Vec<f64> = (0..d_fused_c.len())
        .filter(|i| !prompt.contains(i))
        .map(|i| d_fused_c[i])
        .collect();
    single.kept_backward(&cache, &d_kept)?;
    single.prompt_backward(&cache, &d_prompt)?;
    Ok(bundle)
}

/// Gradient of the distillation term alone, as the single step applies it. Used to check
/// that nothing outside the prompt path is touched.
pub fn sgl_f_backward(single: &mut SingleModalBranch, multi: &MultiModalBranch, sample: &Sample, tau: f64) -> Result<f64> {
    let w = LossWeights {
        lambda_m: 0.0,
        lambda_s: 1.0,
        tau,
    };
    let (out, cache) = single.forward_sample_cached(sample)?;
    let teacher = multi.forward_sample(sample)?;
    let (feat, kl) = loss_sgl_f(&out, &teacher, w.tau)?;
    let (_, dz) = kl_temp_with_grad(&out.logits, &teacher.logits, w.tau)?;
    let d_fused_kl = single.classifier_input_grad(&dz)?;
    let d_fused_feat = mse_grad(&out.fused, &teacher.fused);
    let d_prompt: Vec<f64> = single
        .prompt_range()
        .map(|i| d_fused_feat[i] + d_fused_kl[i])
        .collect();
    single.prompt_backward(&cache, &d_prompt)?;
    Ok(feat + kl)
}

/// Objective whose exact gradient equals the masked single-step gradient: classification at
/// `candidate`, plus the distillation term evaluated with only the prompt path taken from
/// `candidate` and every other single-branch parameter held at `base`.
pub fn sgl_masked_surrogate(
    candidate: &SingleModalBranch,
    base: &SingleModalBranch,
    multi: &MultiModalBranch,
    sample: &Sample,
    w: &LossWeights,
) -> Result<f64> {
    let out = candidate.forward_sample(sample)?;
    let teacher = multi.forward_sample(sample)?;
    let sgl_c = loss_sgl_c(&out, sample.label)?;
    let mut hybrid = base.clone();
    for (dst, src) in hybrid.store_mut().iter_mut().zip(candidate.store().iter()) {
        if is_prompt_param(&dst.name) {
            dst.value = src.value.clone();
        }
    }
    let (feat, kl) = loss_sgl_f(&hybrid.forward_sample(sample)?, &teacher, w.tau)?;
    loss_sgl_total(sgl_c, feat + kl, w.lambda_s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outputs(fused: Vec<f64>, logits: Vec<f64>) -> BranchOutputs {
        let probs = crate::numcore::ops::softmax(&logits);
        BranchOutputs {
            image_feat: fused.clone(),
            clinical_feat: vec![],
            fused,
            logits,
            probs,
            attention: None,
        }
    }

    #[test]
    fn classification_values() {
        let o = outputs(vec![0.0], vec![0.0, 0.0]);
        assert!((loss_mul_c(&o, 1).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        let sure = outputs(vec![0.0], vec![-50.0, 50.0]);
        assert!(loss_sgl_c(&sure, 1).unwrap() < 1e-12);
    }

    #[test]
    fn totals_and_lambda_checks() {
        assert!((loss_mul_total(1.0, 0.5, 0.6).unwrap() - 1.3).abs() < 1e-15);
        assert_eq!(loss_mul_total(1.25, 9.0, 0.0).unwrap(), 1.25);
        assert_eq!(loss_sgl_total(0.75, 9.0, 0.0).unwrap(), 0.75);
        assert!(matches!(loss_mul_total(1.0, 1.0, -0.1), Err(Error::Config(_))));
        assert!(matches!(loss_sgl_total(1.0, 1.0, -0.1), Err(Error::Config(_))));
    }

    #[test]
    fn sgl_f_zero_on_identical_and_plain_kl_at_unit_tau() {
        let a = outputs(vec![0.3, -1.0], vec![0.2, 0.9]);
        assert_eq!(loss_sgl_f(&a, &a, 1.2).unwrap(), (0.0, 0.0));

        let s = outputs(vec![1.0, 2.0], vec![0.5, -0.5]);
        let t = outputs(vec![0.0, 0.0], vec![-1.0, 1.0]);
        let (feat, kl) = loss_sgl_f(&s, &t, 1.0).unwrap();
        assert!((feat - 2.5).abs() < 1e-15);
        // Independent recomputation of KL(softmax(s) ‖ softmax(t)).
        let p0 = 1.0 / (1.0 + (-1.0f64).exp());
        let q0 = 1.0 / (1.0 + (2.0f64).exp());
        let oracle = p0 * (p0 / q0).ln() + (1.0 - p0) * ((1.0 - p0) / (1.0 - q0)).ln();
        assert!((kl - oracle).abs() < 1e-12);
    }

    #[test]
    fn weights_validated() {
        assert!(LossWeights::default().validate().is_ok());
        let bad = LossWeights {
            tau: 0.0,
            ..LossWeights::default()
        };
        assert!(bad.validate().is_err());
    }
}
