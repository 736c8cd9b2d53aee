use serde::{Deserialize, Serialize};

use super::encoders::{
    ClinicalCache, ClinicalEncoder, ImageCache, ImageEncoder, PromptCache, PromptPath,
};
use super::layers::Linear;
use crate::data::{Modality, Sample};
use crate::error::{Error, Result};
use crate::numcore::ops::softmax;
use crate::numcore::{DenseArray, ParamHost, ParamStore, RngStream};

/// Layer sizes shared by both branches and the baselines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_w: usize,
    pub d_c: usize,
    pub d_h: usize,
    pub attn_hidden: usize,
    /// Clinical feature width is `expansion * d_c`.
    pub expansion: usize,
    pub prompt_length: usize,
    pub prompt_hidden: (usize, usize),
    pub proj_dim: usize,
    pub n_classes: usize,
    /// Modality that may be absent at test time.
    pub missing_role: Modality,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_w: 32,
            d_c: 5,
            d_h: 128,
            attn_hidden: 64,
            expansion: 20,
            prompt_length: 50,
            prompt_hidden: (100, 50),
            proj_dim: 64,
            n_classes: 2,
            missing_role: Modality::Clinical,
        }
    }
}

impl ModelConfig {
    pub fn clinical_dim(&self) -> usize {
        self.expansion * self.d_c
    }

    pub fn fused_dim(&self) -> usize {
        self.d_h + self.clinical_dim()
    }

    pub fn kept(&self) -> Modality {
        self.missing_role.other()
    }

    pub fn feature_dim(&self, m: Modality) -> usize {
        match m {
            Modality::Image => self.d_h,
            Modality::Clinical => self.clinical_dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_w", self.d_w),
            ("d_c", self.d_c),
            ("d_h", self.d_h),
            ("attn_hidden", self.attn_hidden),
            ("expansion", self.expansion),
            ("prompt_length", self.prompt_length),
            ("prompt_hidden.0", self.prompt_hidden.0),
            ("prompt_hidden.1", self.prompt_hidden.1),
            ("proj_dim", self.proj_dim),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if self.n_classes < 2 {
            return Err(Error::Config("n_classes must be >= 2".into()));
        }
        Ok(())
    }
}

/// Everything a branch produces for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchOutputs {
    /// Pooled image feature, or the prompt feature standing in for it.
    pub image_feat: Vec<f64>,
    /// Clinical feature, or the prompt feature standing in for it.
    pub clinical_feat: Vec<f64>,
    pub fused: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub attention: Option<Vec<f64>>,
}

impl BranchOutputs {
    fn assemble(
        image_feat: Vec<f64>,
        clinical_feat: Vec<f64>,
        classifier: &Linear,
        store: &ParamStore,
        attention: Option<Vec<f64>>,
    ) -> Result<Self> {
        let mut fused = Vec::with_capacity(image_feat.len() + clinical_feat.len());
        fused.extend_from_slice(&image_feat);
        fused.extend_from_slice(&clinical_feat);
        let logits = classifier.forward_vec(store, &fused)?;
        let probs = softmax(&logits);
        Ok(Self {
            image_feat,
            clinical_feat,
            fused,
            logits,
            probs,
            attention,
        })
    }

    pub fn feature(&self, m: Modality) -> &[f64] {
        match m {
            Modality::Image => &self.image_feat,
            Modality::Clinical => &self.clinical_feat,
        }
    }
}

fn split_fused(d: &[f64], image_dim: usize) -> (&[f64], &[f64]) {
    d.split_at(image_dim)
}

/// Both modalities in: image encoder + clinical encoder → classifier over the spliced features.
#[derive(Clone, Debug)]
pub struct MultiModalBranch {
    cfg: ModelConfig,
    pub(crate) store: ParamStore,
    image: ImageEncoder,
    clinical: ClinicalEncoder,
    proj: Option<Linear>,
    classifier: Linear,
}

#[derive(Clone, Debug)]
pub struct MultiCache {
    image: ImageCache,
    clinical: ClinicalCache,
}

impl MultiModalBranch {
    /// `with_projection` adds the feature-distillation head on the kept modality's feature.
    pub fn new(cfg: &ModelConfig, rng: &mut RngStream, with_projection: bool) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let image = ImageEncoder::new(&mut store, cfg.d_w, cfg.d_h, cfg.attn_hidden, rng)?;
        let clinical = ClinicalEncoder::new(&mut store, cfg.d_c, cfg.clinical_dim(), rng)?;
        let proj = if with_projection {
            Some(Linear::new(
                &mut store,
                "proj",
                cfg.feature_dim(cfg.kept()),
                cfg.proj_dim,
                rng,
            )?)
        } else {
            None
        };
        let classifier = Linear::new(&mut store, "cls", cfg.fused_dim(), cfg.n_classes, rng)?;
        Ok(Self {
            cfg: cfg.clone(),
            store,
            image,
            clinical,
            proj,
            classifier,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn has_projection(&self) -> bool {
        self.proj.is_some()
    }

    pub fn forward(&self, bag: &DenseArray, clinical: &[f64]) -> Result<BranchOutputs> {
        self.forward_cached(bag, clinical).map(|(o, _)| o)
    }

    pub fn forward_cached(&self, bag: &DenseArray, clinical: &[f64]) -> Result<(BranchOutputs, MultiCache)> {
        if bag.cols() != self.cfg.d_w {
            return Err(Error::dim("forward_multimodal(bag)", bag.shape(), (bag.rows(), self.cfg.d_w)));
        }
        let (pooled, image) = self.image.forward(&self.store, bag)?;
        let (clin_feat, clinical) = self.clinical.forward(&self.store, clinical)?;
        let out = BranchOutputs::assemble(
            pooled.feature,
            clin_feat,
            &self.classifier,
            &self.store,
            Some(pooled.weights),
        )?;
        Ok((out, MultiCache { image, clinical }))
    }

    /// Requires both modalities to be visible on `sample`.
    pub fn forward_sample(&self, sample: &Sample) -> Result<BranchOutputs> {
        let (bag, clin) = complete_inputs(sample)?;
        self.forward(bag, clin)
    }

    pub fn forward_sample_cached(&self, sample: &Sample) -> Result<(BranchOutputs, MultiCache)> {
        let (bag, clin) = complete_inputs(sample)?;
        self.forward_cached(bag, clin)
    }

    /// Pooled image feature only (no clinical input needed).
    pub fn pooled_image(&self, bag: &DenseArray) -> Result<Vec<f64>> {
        Ok(self.image.forward(&self.store, bag)?.0.feature)
    }

    /// Clinical feature for an arbitrary record (used by zero-filling).
    pub fn encode_clinical(&self, record: &[f64]) -> Result<Vec<f64>> {
        Ok(self.clinical.forward(&self.store, record)?.0)
    }

    /// Classifier applied to an externally assembled pair of features.
    pub fn classify(&self, image_feat: Vec<f64>, clinical_feat: Vec<f64>) -> Result<BranchOutputs> {
        BranchOutputs::assemble(image_feat, clinical_feat, &self.classifier, &self.store, None)
    }

    pub fn project(&self, feat: &[f64]) -> Result<Vec<f64>> {
        let proj = self
            .proj
            .as_ref()
            .ok_or_else(|| Error::Config("branch has no projection head".into()))?;
        proj.forward_vec(&self.store, feat)
    }

    /// Accumulates projection-head gradients and returns d(feat).
    pub fn project_backward(&mut self, feat: &[f64], dy: &[f64]) -> Result<Vec<f64>> {
        let proj = self
            .proj
            .as_ref()
            .ok_or_else(|| Error::Config("branch has no projection head".into()))?;
        proj.backward_vec(&mut self.store, feat, dy)
    }

    /// Accumulates classifier gradients; returns (d image part, d clinical part).
    pub fn classifier_backward(&mut self, fused: &[f64], dlogits: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let d = self.classifier.backward_vec(&mut self.store, fused, dlogits)?;
        let (a, b) = split_fused(&d, self.cfg.d_h);
        Ok((a.to_vec(), b.to_vec()))
    }

    pub fn encoders_backward(&mut self, cache: &MultiCache, d_image: &[f64], d_clinical: &[f64]) -> Result<()> {
        self.image.backward(&mut self.store, &cache.image, d_image)?;
        self.clinical.backward(&mut self.store, &cache.clinical, d_clinical)?;
        Ok(())
    }
}

pub(crate) fn complete_inputs(sample: &Sample) -> Result<(&DenseArray, &[f64])> {
    match (sample.image(), sample.clinical()) {
        (Some(b), Some(c)) => Ok((b, c)),
        _ => Err(Error::Data(format!(
            "sample {} is missing a modality required by the multi-modal branch",
            sample.id
        ))),
    }
}

/// The modality a single-modal branch still sees.
#[derive(Clone, Debug)]
pub enum KeptEncoder {
    Image(ImageEncoder),
    Clinical(ClinicalEncoder),
}

#[derive(Clone, Debug)]
enum KeptCache {
    Image(ImageCache),
    Clinical(ClinicalCache),
}

/// Input for the kept modality.
#[derive(Clone, Copy, Debug)]
pub enum KeptInput<'a> {
    Image(&'a DenseArray),
    Clinical(&'a [f64]),
}

/// One modality plus a learnable prompt standing in for the missing one.
#[derive(Clone, Debug)]
pub struct SingleModalBranch {
    cfg: ModelConfig,
    pub(crate) store: ParamStore,
    kept: KeptEncoder,
    prompt: PromptPath,
    proj: Linear,
    classifier: Linear,
}

#[derive(Clone, Debug)]
pub struct SingleCache {
    kept: KeptCache,
    prompt: PromptCache,
}

impl SingleModalBranch {
    pub fn new(cfg: &ModelConfig, rng: &mut RngStream) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let kept = match cfg.kept() {
            Modality::Image => KeptEncoder::Image(ImageEncoder::new(
                &mut store,
                cfg.d_w,
                cfg.d_h,
                cfg.attn_hidden,
                rng,
            )?),
            Modality::Clinical => {
                KeptEncoder::Clinical(ClinicalEncoder::new(&mut store, cfg.d_c, cfg.clinical_dim(), rng)?)
            }
        };
        let prompt = PromptPath::new(
            &mut store,
            cfg.prompt_length,
            cfg.prompt_hidden,
            cfg.feature_dim(cfg.missing_role),
            rng,
        )?;
        let proj = Linear::new(&mut store, "proj", cfg.feature_dim(cfg.kept()), cfg.proj_dim, rng)?;
        let classifier = Linear::new(&mut store, "cls", cfg.fused_dim(), cfg.n_classes, rng)?;
        Ok(Self {
            cfg: cfg.clone(),
            store,
            kept,
            prompt,
            proj,
            classifier,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn prompt_path(&self) -> &PromptPath {
        &self.prompt
    }

    /// Substitute feature for the missing modality; identical for every sample.
    pub fn prompt_feature(&self) -> Result<Vec<f64>> {
        Ok(self.prompt.forward(&self.store)?.0)
    }

    pub fn forward(&self, input: KeptInput<'_>) -> Result<BranchOutputs> {
        self.forward_cached(input).map(|(o, _)| o)
    }

    pub fn forward_cached(&self, input: KeptInput<'_>) -> Result<(BranchOutputs, SingleCache)> {
        let (kept_feat, kept_cache, attention) = match (&self.kept, input) {
            (KeptEncoder::Image(enc), KeptInput::Image(bag)) => {
                if bag.cols() != self.cfg.d_w {
                    return Err(Error::dim("forward_singlemodal(bag)", bag.shape(), (bag.rows(), self.cfg.d_w)));
                }
                let (pooled, cache) = enc.forward(&self.store, bag)?;
                (pooled.feature, KeptCache::Image(cache), Some(pooled.weights))
            }
            (KeptEncoder::Clinical(enc), KeptInput::Clinical(rec)) => {
                let (feat, cache) = enc.forward(&self.store, rec)?;
                (feat, KeptCache::Clinical(cache), None)
            }
            _ => {
                return Err(Error::Config(format!(
                    "single-modal branch expects {} input",
                    self.cfg.kept()
                )))
            }
        };
        let (prompt_feat, prompt_cache) = self.prompt.forward(&self.store)?;
        let (image_feat, clinical_feat) = match self.cfg.kept() {
            Modality::Image => (kept_feat, prompt_feat),
            Modality::Clinical => (prompt_feat, kept_feat),
        };
        let out = BranchOutputs::assemble(image_feat, clinical_feat, &self.classifier, &self.store, attention)?;
        Ok((
            out,
            SingleCache {
                kept: kept_cache,
                prompt: prompt_cache,
            },
        ))
    }

    /// Uses the kept modality of `sample`; errors if it is not visible.
    pub fn forward_sample(&self, sample: &Sample) -> Result<BranchOutputs> {
        self.forward(kept_input(sample, self.cfg.kept())?)
    }

    pub fn forward_sample_cached(&self, sample: &Sample) -> Result<(BranchOutputs, SingleCache)> {
        self.forward_cached(kept_input(sample, self.cfg.kept())?)
    }

    /// Kept-modality feature only.
    pub fn kept_feature(&self, sample: &Sample) -> Result<Vec<f64>> {
        match (&self.kept, kept_input(sample, self.cfg.kept())?) {
            (KeptEncoder::Image(enc), KeptInput::Image(bag)) => Ok(enc.forward(&self.store, bag)?.0.feature),
            (KeptEncoder::Clinical(enc), KeptInput::Clinical(rec)) => Ok(enc.forward(&self.store, rec)?.0),
            _ => unreachable!("kept_input matches the configured modality"),
        }
    }

    /// Pooled image feature; only for branches that keep the image modality.
    pub fn pooled_image(&self, bag: &DenseArray) -> Result<Vec<f64>> {
        match &self.kept {
            KeptEncoder::Image(enc) => Ok(enc.forward(&self.store, bag)?.0.feature),
            KeptEncoder::Clinical(_) => Err(Error::Config(
                "this single-modal branch has no image encoder".into(),
            )),
        }
    }

    pub fn project(&self, feat: &[f64]) -> Result<Vec<f64>> {
        self.proj.forward_vec(&self.store, feat)
    }

    pub fn project_backward(&mut self, feat: &[f64], dy: &[f64]) -> Result<()> {
        self.proj.backward_vec(&mut self.store, feat, dy)?;
        Ok(())
    }

    /// Range of the prompt feature inside the fused vector.
    pub fn prompt_range(&self) -> std::ops::Range<usize> {
        match self.cfg.kept() {
            Modality::Image => self.cfg.d_h..self.cfg.fused_dim(),
            Modality::Clinical => 0..self.cfg.d_h,
        }
    }

    /// Full classifier backward; returns d(fused).
    pub fn classifier_backward(&mut self, fused: &[f64], dlogits: &[f64]) -> Result<Vec<f64>> {
        self.classifier.backward_vec(&mut self.store, fused, dlogits)
    }

    /// d(fused) through the classifier without accumulating classifier gradients.
    pub fn classifier_input_grad(&self, dlogits: &[f64]) -> Result<Vec<f64>> {
        self.classifier.backward_input(&self.store, dlogits)
    }

    pub fn kept_backward(&mut self, cache: &SingleCache, d_kept: &[f64]) -> Result<()> {
        match (&self.kept, &cache.kept) {
            (KeptEncoder::Image(enc), KeptCache::Image(c)) => enc.backward(&mut self.store, c, d_kept),
            (KeptEncoder::Clinical(enc), KeptCache::Clinical(c)) => enc.backward(&mut self.store, c, d_kept),
            _ => unreachable!("cache produced by this branch"),
        }
    }

    pub fn prompt_backward(&mut self, cache: &SingleCache, d_prompt: &[f64]) -> Result<()> {
        self.prompt.backward(&mut self.store, &cache.prompt, d_prompt)
    }
}

pub(crate) fn kept_input(sample: &Sample, kept: Modality) -> Result<KeptInput<'_>> {
    match kept {
        Modality::Image => sample.image().map(KeptInput::Image),
        Modality::Clinical => sample.clinical().map(KeptInput::Clinical),
    }
    .ok_or_else(|| Error::Unroutable(sample.id.clone()))
}

/// Single-modal branch for the image-missing setting: the image encoder is dropped and the
/// prompt maps straight to an image-sized feature.
pub fn build_wsi_missing_variant(cfg: &ModelConfig, rng: &mut RngStream) -> Result<SingleModalBranch> {
    if cfg.missing_role != Modality::Image {
        return Err(Error::Config(format!(
            "image-missing variant needs missing_role = image, got {}",
            cfg.missing_role
        )));
    }
    SingleModalBranch::new(cfg, rng)
}

impl ParamHost for MultiModalBranch {
    fn stores(&self) -> Vec<(&str, &ParamStore)> {
        vec![("multi", &self.store)]
    }
    fn stores_mut(&mut self) -> Vec<(&str, &mut ParamStore)> {
        vec![("multi", &mut self.store)]
    }
}

impl ParamHost for SingleModalBranch {
    fn stores(&self) -> Vec<(&str, &ParamStore)> {
        vec![("single", &self.store)]
    }
    fn stores_mut(&mut self) -> Vec<(&str, &mut ParamStore)> {
        vec![("single", &mut self.store)]
    }
}
