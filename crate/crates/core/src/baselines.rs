//! Reference methods for an absent modality: zero filling, feature generation by an
//! autoencoder, and a late-fusion ensemble of two unimodal networks.

use crate::data::{Modality, Sample};
use crate::error::{Error, Result};
use crate::model::{
    BranchOutputs, ClinicalEncoder, ImageEncoder, Linear, ModelConfig, MultiModalBranch, Predictor, Stack,
};
use crate::numcore::ops::{cross_entropy, cross_entropy_grad_logits, mse, mse_grad, softmax};
use crate::numcore::{DenseArray, ParamHost, ParamStore, RngStream};

/// Output used when a unimodal net has nothing to look at.
fn uninformative(n_classes: usize) -> Vec<f64> {
    vec![1.0 / n_classes as f64; n_classes]
}

/// One multi-modal network; an absent modality is replaced by zeros before its encoder.
#[derive(Clone, Debug)]
pub struct FillingModel {
    pub net: MultiModalBranch,
}

impl FillingModel {
    pub fn new(cfg: &ModelConfig, rng: &RngStream) -> Result<Self> {
        let mut r = rng.substream("filling");
        Ok(Self {
            net: MultiModalBranch::new(cfg, &mut r, false)?,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        self.net.config()
    }

    /// Inputs with the missing modality zero-filled.
    fn filled<'a>(&self, sample: &'a Sample, zero_bag: &'a DenseArray, zero_rec: &'a [f64]) -> Result<(&'a DenseArray, &'a [f64])> {
        let bag = sample.image().unwrap_or(zero_bag);
        let rec = sample.clinical().unwrap_or(zero_rec);
        if sample.image().is_none() && sample.clinical().is_none() {
            return Err(Error::Unroutable(sample.id.clone()));
        }
        Ok((bag, rec))
    }

    pub fn forward(&self, sample: &Sample) -> Result<BranchOutputs> {
        let cfg = self.config();
        let zero_bag = DenseArray::zeros(1, cfg.d_w);
        let zero_rec = vec![0.0; cfg.d_c];
        let (bag, rec) = self.filled(sample, &zero_bag, &zero_rec)?;
        self.net.forward(bag, rec)
    }

    /// Cross-entropy on a complete sample; gradients accumulated with weight `scale`.
    pub fn loss_backward(&mut self, sample: &Sample, scale: f64) -> Result<f64> {
        let (out, cache) = self.net.forward_sample_cached(sample)?;
        let loss = cross_entropy(&out.probs, sample.label)?;
        let dz: Vec<f64> = cross_entropy_grad_logits(&out.probs, sample.label)
            .into_iter()
            .map(|g| g * scale)
            .collect();
        let (d_img, d_clin) = self.net.classifier_backward(&out.fused, &dz)?;
        self.net.encoders_backward(&cache, &d_img, &d_clin)?;
        Ok(loss)
    }

    pub fn loss(&self, sample: &Sample) -> Result<f64> {
        cross_entropy(&self.net.forward_sample(sample)?.probs, sample.label)
    }
}

impl Predictor for FillingModel {
    fn method(&self) -> &str {
        "filling"
    }
    fn predict(&self, sample: &Sample) -> Result<Vec<f64>> {
        Ok(self.forward(sample)?.probs)
    }
}

impl ParamHost for FillingModel {
    fn stores(&self) -> Vec<(&str, &ParamStore)> {
        vec![("net", self.net.store())]
    }
    fn stores_mut(&mut self) -> Vec<(&str, &mut ParamStore)> {
        vec![("net", self.net.store_mut())]
    }
}

/// Feature generator: kept-modality feature → hidden (ReLU) → missing-modality feature.
#[derive(Clone, Debug)]
pub struct FeatureAutoencoder {
    pub store: ParamStore,
    net: Stack,
}

pub const AE_HIDDEN: usize = 64;

impl FeatureAutoencoder {
    pub fn new(d_in: usize, d_out: usize, hidden: usize, rng: &mut RngStream) -> Result<Self> {
        let mut store = ParamStore::new();
        let net = Stack::new(&mut store, "ae", &[d_in, hidden, d_out], false, rng)?;
        Ok(Self { store, net })
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .net
            .forward_only(&self.store, &DenseArray::row_vector(x.to_vec()))?
            .into_vec())
    }

    pub fn loss(&self, x: &[f64], target: &[f64]) -> Result<f64> {
        mse(&self.forward(x)?, target)
    }

    pub fn loss_backward(&mut self, x: &[f64], target: &[f64], scale: f64) -> Result<f64> {
        let cache = self.net.forward(&self.store, &DenseArray::row_vector(x.to_vec()))?;
        let y = cache.output().as_slice();
        let loss = mse(y, target)?;
        let dy: Vec<f64> = mse_grad(y, target).into_iter().map(|g| g * scale).collect();
        self.net
            .backward(&mut self.store, &cache, &DenseArray::row_vector(dy))?;
        Ok(loss)
    }
}

impl ParamHost for FeatureAutoencoder {
    fn stores(&self) -> Vec<(&str, &ParamStore)> {
        vec![("ae", &self.store)]
    }
    fn stores_mut(&mut self) -> Vec<(&str, &mut ParamStore)> {
        vec![("ae", &mut self.store)]
    }
}

/// Two-stage model: a Filling network, then an autoencoder that predicts the missing
/// modality's feature from the kept one. Stage 1 is frozen while stage 2 trains.
#[derive(Clone, Debug)]
pub struct AeModel {
    pub base: Option<FillingModel>,
    pub ae: FeatureAutoencoder,
    cfg: ModelConfig,
}

impl AeModel {
    pub fn new(cfg: &ModelConfig, rng: &RngStream) -> Result<Self> {
        cfg.validate()?;
        let mut r = rng.substream("ae");
        let ae = FeatureAutoencoder::new(
            cfg.feature_dim(cfg.kept()),
            cfg.feature_dim(cfg.missing_role),
            AE_HIDDEN,
            &mut r,
        )?;
        Ok(Self {
            base: None,
            ae,
            cfg: cfg.clone(),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn set_stage1(&mut self, base: FillingModel) {
        self.base = Some(base);
    }

    pub fn stage1(&self) -> Result<&FillingModel> {
        self.base
            .as_ref()
            .ok_or_else(|| Error::Sequencing("autoencoder stage requires a trained stage-1 network".into()))
    }

    /// (kept feature, missing feature) produced by the frozen stage-1 network.
    pub fn feature_pair(&self, sample: &Sample) -> Result<(Vec<f64>, Vec<f64>)> {
        let out = self.stage1()?.net.forward_sample(sample)?;
        let kept = self.cfg.kept();
        Ok((out.feature(kept).to_vec(), out.feature(kept.other()).to_vec()))
    }

    pub fn stage2_loss_backward(&mut self, sample: &Sample, scale: f64) -> Result<f64> {
        let (x, target) = self.feature_pair(sample)?;
        self.ae.loss_backward(&x, &target, scale)
    }

    pub fn stage2_loss(&self, sample: &Sample) -> Result<f64> {
        let (x, target) = self.feature_pair(sample)?;
        self.ae.loss(&x, &target)
    }

    pub fn forward(&self, sample: &Sample) -> Result<BranchOutputs> {
        let base = self.stage1()?;
        if sample.is_complete() {
            return base.net.forward_sample(sample);
        }
        let net = &base.net;
        match self.cfg.missing_role {
            Modality::Clinical => {
                let bag = sample.image().ok_or_else(|| Error::Unroutable(sample.id.clone()))?;
                let f_img = net.pooled_image(bag)?;
                let f_clin = self.ae.forward(&f_img)?;
                net.classify(f_img, f_clin)
            }
            Modality::Image => {
                let rec = sample.clinical().ok_or_else(|| Error::Unroutable(sample.id.clone()))?;
                let f_clin = net.encode_clinical(rec)?;
                let f_img = self.ae.forward(&f_clin)?;
                net.classify(f_img, f_clin)
            }
        }
    }
}

impl Predictor for AeModel {
    fn method(&self) -> &str {
        "ae"
    }
    fn predict(&self, sample: &Sample) -> Result<Vec<f64>> {
        Ok(self.forward(sample)?.probs)
    }
}

impl ParamHost for AeModel {
    fn stores(&self) -> Vec<(&str, &ParamStore)> {
        let mut v = Vec::new();
        if let Some(b) = &self.base {
            v.push(("net", b.net.store()));
        }
        v.push(("ae", &self.ae.store));
        v
    }
    fn stores_mut(&mut self) -> Vec<(&str, &mut ParamStore)> {
        let mut v = Vec::new();
        if let Some(b) = &mut self.base {
            v.push(("net", b.net.store_mut()));
        }
        v.push(("ae", &mut self.ae.store));
        v
    }
}

#[derive(Clone, Debug)]
enum UniEncoder {
    Image(ImageEncoder),
    Clinical(ClinicalEncoder),
}

/// Classifier over a single modality: the image-only and clinical-only references and the
/// two members of the ensemble.
#[derive(Clone, Debug)]
pub struct UnimodalNet {
    modality: Modality,
    n_classes: usize,
    pub store: ParamStore,
    encoder: UniEncoder,
    classifier: Linear,
}

impl UnimodalNet {
    pub fn new(cfg: &ModelConfig, modality: Modality, rng: &mut RngStream) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let encoder = match modality {
            Modality::Image => UniEncoder::Image(ImageEncoder::new(&mut store, cfg.d_w, cfg.d_h, cfg.attn_hidden, rng)?),
            Modality::Clinical => UniEncoder::Clinical(ClinicalEncoder::new(&mut store, cfg.d_c, cfg.clinical_dim(), rng)?),
        };
        let classifier = Linear::new(&mut store, "cls", cfg.feature_dim(modality), cfg.n_classes, rng)?;
        Ok(Self {
            modality,
            n_classes: cfg.n_classes,
            store,
            encoder,
            classifier,
        })
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    /// Class probabilities, or `None` when the modality is not visible.
    pub fn probs(&self, sample: &Sample) -> Result<Option<Vec<f64>>> {
        let feat = match &self.encoder {
            UniEncoder::Image(enc) => match sample.image() {
                Some(bag) => enc.forward(&self.store, bag)?.0.feature,
                None => return Ok(None),
            },
            UniEncoder::Clinical(enc) => match sample.clinical() {
                Some(rec) => enc.forward(&self.store, rec)?.0,
                None => return Ok(None),
            },
        };
        Ok(Some(softmax(&self.classifier.forward_vec(&self.store, &feat)?)))
    }

    fn missing(&self, sample: &Sample) -> Error {
        Error::Data(format!("sample {} has no {} input", sample.id, self.modality))
    }

    pub fn loss(&self, sample: &Sample) -> Result<f64> {
        let p = self.probs(sample)?.ok_or_else(|| self.missing(sample))?;
        cross_entropy(&p, sample.label)
    }

    pub fn loss_backward(&mut self, sample: &Sample, scale: f64) -> Result<f64> {
        let probs = match &self.encoder {
            UniEncoder::Image(enc) => {
                let bag = sample.image().ok_or_else(|| self.missing(sample))?;
                let (pooled, cache) = enc.forward(&self.store, bag)?;
                let probs = softmax(&self.classifier.forward_vec(&self.store, &pooled.feature)?);
                let dz = scaled_ce_grad(&probs, sample.label, scale);
                let df = self.classifier.backward_vec(&mut self.store, &pooled.feature, &dz)?;
                enc.backward(&mut self.store, &cache, &df)?;
                probs
            }
            UniEncoder::Clinical(enc) => {
                let rec = sample.clinical().ok_or_else(|| self.missing(sample))?;
                let (feat, cache) = enc.forward(&self.store, rec)?;
                let probs = softmax(&self.classifier.forward_vec(&self.store, &feat)?);
                let dz = scaled_ce_grad(&probs, sample.label, scale);
                let df = self.classifier.backward_vec(&mut self.store, &feat, &dz)?;
                enc.backward(&mut self.store, &cache, &df)?;
                probs
            }
        };
        cross_entropy(&probs, sample.label)
    }
}

fn scaled_ce_grad(probs: &[f64], label: usize, scale: f64) -> Vec<f64> {
    cross_entropy_grad_logits(probs, label)
        .into_iter()
        .map(|g| g * scale)
        .collect()
}

impl Predictor for UnimodalNet {
    fn method(&self) -> &str {
        match self.modality {
            Modality::Image => "image-only",
            Modality::Clinical => "clinical-only",
        }
    }
    fn predict(&self, sample: &Sample) -> Result<Vec<f64>> {
        Ok(self.probs(sample)?.unwrap_or_else(|| uninformative(self.n_classes)))
    }
}

impl ParamHost for UnimodalNet {
    fn stores(&self) -> Vec<(&str, &ParamStore)> {
        vec![(self.modality.as_str(), &self.store)]
    }
    fn stores_mut(&mut self) -> Vec<(&str, &mut ParamStore)> {
        vec![(self.modality.as_str(), &mut self.store)]
    }
}

/// Two independently trained unimodal nets fused by a weighted mean of probabilities.
#[derive(Clone, Debug)]
pub struct EnsembleModel {
    pub image: UnimodalNet,
    pub clinical: UnimodalNet,
    pub alpha: f64,
}

impl EnsembleModel {
    pub fn new(cfg: &ModelConfig, alpha: f64, rng: &RngStream) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self {
            image: UnimodalNet::new(cfg, Modality::Image, &mut rng.substream("ensemble-image"))?,
            clinical: UnimodalNet::new(cfg, Modality::Clinical, &mut rng.substream("ensemble-clinical"))?,
            alpha,
        })
    }
}

pub fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("ensemble alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(())
}

/// `alpha * p_image + (1 - alpha) * p_clinical`.
pub fn fuse_probs(p_image: &[f64], p_clinical: &[f64], alpha: f64) -> Vec<f64> {
    p_image
        .iter()
        .zip(p_clinical)
        .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
        .collect()
}

impl Predictor for EnsembleModel {
    fn method(&self) -> &str {
        "ensemble"
    }
    fn predict(&self, sample: &Sample) -> Result<Vec<f64>> {
        match (self.image.probs(sample)?, self.clinical.probs(sample)?) {
            (Some(pi), Some(pc)) => Ok(fuse_probs(&pi, &pc, self.alpha)),
            (Some(pi), None) => Ok(pi),
            (None, Some(pc)) => Ok(pc),
            (None, None) => Err(Error::Unroutable(sample.id.clone())),
        }
    }
}

impl ParamHost for EnsembleModel {
    fn stores(&self) -> Vec<(&str, &ParamStore)> {
        vec![("image", &self.image.store), ("clinical", &self.clinical.store)]
    }
    fn stores_mut(&mut self) -> Vec<(&str, &mut ParamStore)> {
        vec![("image", &mut self.image.store), ("clinical", &mut self.clinical.store)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            d_w: 3,
            d_c: 2,
            d_h: 4,
            attn_hidden: 3,
            expansion: 2,
            prompt_length: 3,
            prompt_hidden: (4, 3),
            proj_dim: 3,
            ..ModelConfig::default()
        }
    }

    fn sample(clinical: Option<Vec<f64>>) -> Sample {
        let bag = DenseArray::from_rows(&[vec![0.1, -0.4, 0.9], vec![1.0, 0.2, -0.3]]).unwrap();
        let mut s = Sample::new("a", 1, bag, Some(vec![0.0, 0.0])).unwrap();
        match clinical {
            Some(c) => s.clinical = Some(c),
            None => s.presence.clinical = false,
        }
        s
    }

    #[test]
    fn filling_absent_equals_zero_record() {
        let m = FillingModel::new(&tiny_cfg(), &RngStream::new(3)).unwrap();
        let absent = m.predict(&sample(None)).unwrap();
        let zeros = m.predict(&sample(Some(vec![0.0, 0.0]))).unwrap();
        assert_eq!(absent, zeros);
        let s = sample(Some(vec![0.7, -1.0]));
        assert_eq!(m.predict(&s).unwrap(), m.net.forward_sample(&s).unwrap().probs);
    }

    #[test]
    fn ensemble_fusion_arithmetic() {
        let p = fuse_probs(&[0.8, 0.2], &[0.6, 0.4], 0.5);
        assert!((p[0] - 0.7).abs() < 1e-15 && (p[1] - 0.3).abs() < 1e-15);
        assert_eq!(fuse_probs(&[0.8, 0.2], &[0.6, 0.4], 1.0), vec![0.8, 0.2]);
        assert!(check_alpha(1.5).is_err());
    }

    #[test]
    fn ensemble_falls_back_to_image() {
        let m = EnsembleModel::new(&tiny_cfg(), 0.5, &RngStream::new(1)).unwrap();
        let s = sample(None);
        assert_eq!(m.predict(&s).unwrap(), m.image.probs(&s).unwrap().unwrap());
        let d1 = m.image.store.digest();
        let d2 = m.clinical.store.digest();
        assert_ne!(d1, d2);
    }

    #[test]
    fn ae_requires_stage1() {
        let cfg = tiny_cfg();
        let mut m = AeModel::new(&cfg, &RngStream::new(0)).unwrap();
        let s = sample(Some(vec![0.1, 0.2]));
        assert!(matches!(m.stage2_loss_backward(&s, 1.0), Err(Error::Sequencing(_))));
        m.set_stage1(FillingModel::new(&cfg, &RngStream::new(0)).unwrap());
        let before = m.stage1().unwrap().net.store().digest();
        m.stage2_loss_backward(&s, 1.0).unwrap();
        assert_eq!(before, m.stage1().unwrap().net.store().digest());
        // Complete sample bypasses the generator.
        assert_eq!(
            m.predict(&s).unwrap(),
            m.stage1().unwrap().predict(&s).unwrap()
        );
    }

    #[test]
    fn unimodal_uninformative_when_blind() {
        let cfg = tiny_cfg();
        let net = UnimodalNet::new(&cfg, Modality::Clinical, &mut RngStream::new(0)).unwrap();
        assert_eq!(net.predict(&sample(None)).unwrap(), vec![0.5, 0.5]);
        let s = Sample {
            bag: Arc::new(DenseArray::zeros(1, 3)),
            ..sample(Some(vec![1.0, 2.0]))
        };
        assert!(net.predict(&s).unwrap()[0] > 0.0);
    }
}
