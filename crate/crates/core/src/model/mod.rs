//! The multi-modal and single-modal branches, attention pooling, routing and feature export.

mod branch;
mod encoders;
mod export;
mod layers;

pub use branch::{
    build_wsi_missing_variant, BranchOutputs, KeptEncoder, KeptInput, ModelConfig, MultiCache,
    MultiModalBranch, SingleCache, SingleModalBranch,
};
pub use encoders::{
    is_prompt_param, AttentionHead, ClinicalEncoder, ImageEncoder, Pooled, PromptPath,
};
pub use export::{export_features, features_csv, PooledImageSource};
pub use layers::{Linear, Stack, StackCache};

use crate::checkpoint::Checkpoint;
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::numcore::{ParamHost, ParamStore, RngStream};

/// Anything that maps a (possibly incomplete) sample to class probabilities.
pub trait Predictor {
    fn method(&self) -> &str;
    fn predict(&self, sample: &Sample) -> Result<Vec<f64>>;
}

/// Which branch serves a sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Route {
    Multi,
    Single,
}

/// Multi-modal branch when every modality is visible, single-modal branch when only the
/// kept modality is, error otherwise.
pub fn route(sample: &Sample, cfg: &ModelConfig) -> Result<Route> {
    if sample.is_complete() {
        Ok(Route::Multi)
    } else if sample.has(cfg.kept()) {
        Ok(Route::Single)
    } else {
        Err(Error::Unroutable(sample.id.clone()))
    }
}

pub fn route_inference(
    sample: &Sample,
    multi: &MultiModalBranch,
    single: &SingleModalBranch,
) -> Result<Vec<f64>> {
    match route(sample, multi.config())? {
        Route::Multi => Ok(multi.forward_sample(sample)?.probs),
        Route::Single => Ok(single.forward_sample(sample)?.probs),
    }
}

/// Both branches of the bidirectional-distillation framework.
#[derive(Clone, Debug)]
pub struct BdModel {
    pub multi: MultiModalBranch,
    pub single: SingleModalBranch,
}

impl BdModel {
    pub fn new(cfg: &ModelConfig, rng: &RngStream) -> Result<Self> {
        let mut r_multi = rng.substream("multi");
        let mut r_single = rng.substream("single");
        Ok(Self {
            multi: MultiModalBranch::new(cfg, &mut r_multi, true)?,
            single: SingleModalBranch::new(cfg, &mut r_single)?,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        self.multi.config()
    }

    pub fn to_checkpoint(&self, mut meta: serde_json::Value) -> Checkpoint {
        meta["model"] = serde_json::to_value(self.config()).expect("serializable config");
        Checkpoint::from_stores("bd", meta, &self.stores())
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != "bd" {
            return Err(Error::Checkpoint(format!("expected kind bd, got {}", ck.kind)));
        }
        let cfg: ModelConfig = ck.meta_field("model")?;
        let mut m = Self::new(&cfg, &RngStream::new(0))?;
        ck.restore_into("multi", &mut m.multi.store)?;
        ck.restore_into("single", &mut m.single.store)?;
        Ok(m)
    }
}

impl Predictor for BdModel {
    fn method(&self) -> &str {
        "bd"
    }

    fn predict(&self, sample: &Sample) -> Result<Vec<f64>> {
        route_inference(sample, &self.multi, &self.single)
    }
}

impl ParamHost for BdModel {
    fn stores(&self) -> Vec<(&str, &ParamStore)> {
        vec![("multi", &self.multi.store), ("single", &self.single.store)]
    }
    fn stores_mut(&mut self) -> Vec<(&str, &mut ParamStore)> {
        vec![("multi", &mut self.multi.store), ("single", &mut self.single.store)]
    }
}

/// Predictor adapters that evaluate exactly one branch regardless of modality presence.
pub struct MultiOnly<'a>(pub &'a MultiModalBranch);
pub struct SingleOnly<'a>(pub &'a SingleModalBranch);

impl Predictor for MultiOnly<'_> {
    fn method(&self) -> &str {
        "multi-only"
    }
    fn predict(&self, sample: &Sample) -> Result<Vec<f64>> {
        Ok(self.0.forward(&sample.bag, sample.clinical.as_deref().ok_or_else(|| {
            Error::Data(format!("sample {} has no clinical record", sample.id))
        })?)?
        .probs)
    }
}

impl Predictor for SingleOnly<'_> {
    fn method(&self) -> &str {
        "single-only"
    }
    fn predict(&self, sample: &Sample) -> Result<Vec<f64>> {
        let mut s = sample.clone();
        s.presence = crate::data::Presence::BOTH;
        Ok(self.0.forward_sample(&s)?.probs)
    }
}

#[cfg(test)]
mod tests;
