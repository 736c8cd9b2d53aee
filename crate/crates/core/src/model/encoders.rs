use std::cmp::Ordering;

use super::layers::{Stack, StackCache};
use crate::error::{Error, Result};
use crate::numcore::ops::softmax;
use crate::numcore::{DenseArray, ParamId, ParamStore, RngStream};

/// Scores each patch with a small MLP and pools the bag with softmax weights.
#[derive(Clone, Debug)]
pub struct AttentionHead {
    mlp: Stack,
}

/// Result of attention pooling: the pooled vector and one weight per patch.
#[derive(Clone, Debug, PartialEq)]
pub struct Pooled {
    pub feature: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct PoolCache {
    feats: DenseArray,
    scores: StackCache,
    weights: Vec<f64>,
}

impl AttentionHead {
    /// Two hidden ReLU layers of width `hidden`, scalar logit per patch.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        hidden: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        Ok(Self {
            mlp: Stack::new(store, name, &[d_in, hidden, hidden, 1], false, rng)?,
        })
    }

    /// Weighted sum of patch features with softmax-normalized scores.
    pub fn pool(&self, store: &ParamStore, feats: &DenseArray) -> Result<Pooled> {
        self.pool_cached(store, feats).map(|(p, _)| p)
    }

    pub(crate) fn pool_cached(
        &self,
        store: &ParamStore,
        feats: &DenseArray,
    ) -> Result<(Pooled, PoolCache)> {
        if feats.cols() != self.mlp.in_dim() {
            return Err(Error::dim("attention_pool", feats.shape(), (feats.rows(), self.mlp.in_dim())));
        }
        let scores = self.mlp.forward(store, feats)?;
        let weights = softmax(scores.output().as_slice());
        let mut feature = vec![0.0; feats.cols()];
        for (j, &a) in weights.iter().enumerate() {
            for (p, &v) in feature.iter_mut().zip(feats.row(j)) {
                *p += a * v;
            }
        }
        let pooled = Pooled {
            feature,
            weights: weights.clone(),
        };
        Ok((
            pooled,
            PoolCache {
                feats: feats.clone(),
                scores,
                weights,
            },
        ))
    }

    /// Accumulates head gradients and returns the gradient w.r.t. the patch features.
    pub(crate) fn backward(
        &self,
        store: &mut ParamStore,
        cache: &PoolCache,
        dpooled: &[f64],
    ) -> Result<DenseArray> {
        let t = cache.feats.rows();
        let a = &cache.weights;
        let mut dfeats = DenseArray::zeros(t, cache.feats.cols());
        let mut da = vec![0.0; t];
        for j in 0..t {
            let row = cache.feats.row(j);
            da[j] = row.iter().zip(dpooled).map(|(x, g)| x * g).sum();
            for (d, &g) in dfeats.row_mut(j).iter_mut().zip(dpooled) {
                *d = a[j] * g;
            }
        }
        let mean: f64 = a.iter().zip(&da).map(|(x, y)| x * y).sum();
        let ds: Vec<f64> = a.iter().zip(&da).map(|(&aj, &dj)| aj * (dj - mean)).collect();
        let ds = DenseArray::new(t, 1, ds)?;
        let from_scores = self.mlp.backward(store, &cache.scores, &ds)?;
        dfeats.add_scaled(&from_scores, 1.0)?;
        Ok(dfeats)
    }
}

/// Row order that sorts patches lexicographically. Reductions run in this order so
/// pooled outputs do not depend on how the bag was listed.
pub(crate) fn canonical_order(bag: &DenseArray) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..bag.rows()).collect();
    idx.sort_by(|&a, &b| {
        for (x, y) in bag.row(a).iter().zip(bag.row(b)) {
            match x.total_cmp(y) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        Ordering::Equal
    });
    idx
}

/// Per-branch patch adapter followed by attention pooling.
#[derive(Clone, Debug)]
pub struct ImageEncoder {
    adapter: Stack,
    head: AttentionHead,
}

#[derive(Clone, Debug)]
pub struct ImageCache {
    adapter: StackCache,
    pool: PoolCache,
}

impl ImageEncoder {
    pub fn new(
        store: &mut ParamStore,
        d_w: usize,
        d_h: usize,
        attn_hidden: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        Ok(Self {
            adapter: Stack::new(store, "adapter", &[d_w, d_h], true, rng)?,
            head: AttentionHead::new(store, "attn", d_h, attn_hidden, rng)?,
        })
    }

    pub fn out_dim(&self) -> usize {
        self.adapter.out_dim()
    }

    pub fn head(&self) -> &AttentionHead {
        &self.head
    }

    fn canonical(bag: &DenseArray) -> Result<(DenseArray, Vec<usize>)> {
        if bag.rows() == 0 {
            return Err(Error::EmptyBag);
        }
        let order = canonical_order(bag);
        Ok((bag.select_rows(&order), order))
    }

    /// Pooled feature; attention weights are reported in the bag's original row order.
    pub fn forward(&self, store: &ParamStore, bag: &DenseArray) -> Result<(Pooled, ImageCache)> {
        let (sorted, order) = Self::canonical(bag)?;
        let adapter = self.adapter.forward(store, &sorted)?;
        let (mut pooled, pool) = self.head.pool_cached(store, adapter.output())?;
        let mut weights = vec![0.0; order.len()];
        for (k, &orig) in order.iter().enumerate() {
            weights[orig] = pooled.weights[k];
        }
        pooled.weights = weights;
        Ok((pooled, ImageCache { adapter, pool }))
    }

    pub fn backward(&self, store: &mut ParamStore, cache: &ImageCache, dpooled: &[f64]) -> Result<()> {
        let dfeats = self.head.backward(store, &cache.pool, dpooled)?;
        self.adapter.backward(store, &cache.adapter, &dfeats)?;
        Ok(())
    }
}

/// Clinical record → expanded feature (one FC+ReLU layer).
#[derive(Clone, Debug)]
pub struct ClinicalEncoder {
    stack: Stack,
}

#[derive(Clone, Debug)]
pub struct ClinicalCache(StackCache);

impl ClinicalEncoder {
    pub fn new(store: &mut ParamStore, d_c: usize, out: usize, rng: &mut RngStream) -> Result<Self> {
        Ok(Self {
            stack: Stack::new(store, "clin", &[d_c, out], true, rng)?,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.stack.in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.stack.out_dim()
    }

    pub fn forward(&self, store: &ParamStore, record: &[f64]) -> Result<(Vec<f64>, ClinicalCache)> {
        if record.len() != self.in_dim() {
            return Err(Error::dim("clinical_encoder", (1, record.len()), (1, self.in_dim())));
        }
        let cache = self.stack.forward(store, &DenseArray::row_vector(record.to_vec()))?;
        Ok((cache.output().as_slice().to_vec(), ClinicalCache(cache)))
    }

    pub fn backward(&self, store: &mut ParamStore, cache: &ClinicalCache, dy: &[f64]) -> Result<()> {
        self.stack
            .backward(store, &cache.0, &DenseArray::row_vector(dy.to_vec()))?;
        Ok(())
    }
}

/// Shared learnable prompt vector and the MLP mapping it to a substitute feature.
#[derive(Clone, Debug)]
pub struct PromptPath {
    prompt: ParamId,
    mapper: Stack,
}

#[derive(Clone, Debug)]
pub struct PromptCache(StackCache);

/// True for parameters owned by the prompt path (the prompt vector and its mapper).
pub fn is_prompt_param(name: &str) -> bool {
    name == "prompt" || name.starts_with("prompt_map.")
}

impl PromptPath {
    pub fn new(
        store: &mut ParamStore,
        length: usize,
        hidden: (usize, usize),
        out: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let mut init = DenseArray::zeros(1, length);
        for v in init.as_mut_slice() {
            *v = rng.uniform_range(-1.0, 1.0);
        }
        let prompt = store.add("prompt", init)?;
        let mapper = Stack::new(store, "prompt_map", &[length, hidden.0, hidden.1, out], false, rng)?;
        Ok(Self { prompt, mapper })
    }

    pub fn length(&self) -> usize {
        self.mapper.in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.mapper.out_dim()
    }

    pub fn forward(&self, store: &ParamStore) -> Result<(Vec<f64>, PromptCache)> {
        let cache = self.mapper.forward(store, store.value(self.prompt))?;
        Ok((cache.output().as_slice().to_vec(), PromptCache(cache)))
    }

    /// Accumulates into the mapper and the prompt vector itself.
    pub fn backward(&self, store: &mut ParamStore, cache: &PromptCache, dy: &[f64]) -> Result<()> {
        let dprompt = self
            .mapper
            .backward(store, &cache.0, &DenseArray::row_vector(dy.to_vec()))?;
        store.grad_mut(self.prompt).add_scaled(&dprompt, 1.0)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed_head() -> (ParamStore, AttentionHead) {
        // d_in = 2, hidden = 1: logit(f) = ln3 * relu(relu(f[0])).
        let mut store = ParamStore::new();
        let mut rng = RngStream::new(0);
        let head = AttentionHead::new(&mut store, "attn", 2, 1, &mut rng).unwrap();
        store.zero_values();
        let w0 = store.id("attn.0.w").unwrap();
        store.value_mut(w0).set(0, 0, 1.0);
        let w1 = store.id("attn.1.w").unwrap();
        store.value_mut(w1).set(0, 0, 1.0);
        let w2 = store.id("attn.2.w").unwrap();
        store.value_mut(w2).set(0, 0, 3f64.ln());
        (store, head)
    }

    #[test]
    fn singleton_bag() {
        let (store, head) = fixed_head();
        let f = DenseArray::row_vector(vec![0.4, -2.0]);
        let p = head.pool(&store, &f).unwrap();
        assert_eq!(p.weights, vec![1.0]);
        assert_eq!(p.feature, vec![0.4, -2.0]);
    }

    #[test]
    fn equal_patches_pool_to_the_patch() {
        let (store, head) = fixed_head();
        let f = DenseArray::from_rows(&vec![vec![0.25, 1.5]; 3]).unwrap();
        let p = head.pool(&store, &f).unwrap();
        for (a, b) in p.feature.iter().zip([0.25, 1.5]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_softmax_weights() {
        let (store, head) = fixed_head();
        let f = DenseArray::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let p = head.pool(&store, &f).unwrap();
        assert!((p.weights[0] - 0.75).abs() < 1e-12);
        assert!((p.weights[1] - 0.25).abs() < 1e-12);
        assert!((p.feature[0] - 0.75).abs() < 1e-12);
        assert!((p.feature[1] - 0.25).abs() < 1e-12);
    }
}
