use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

/// Deterministic random stream identified by `(seed, path)`.
///
/// Every named substream is keyed independently, so draws made from one
/// (say `"mask"`) never shift the sequence seen by another (`"init"`).
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    path: String,
    inner: ChaCha20Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::keyed(seed, String::from("root"))
    }

    fn keyed(seed: u64, path: String) -> Self {
        let mut h = Sha256::new();
        h.update(seed.to_le_bytes());
        h.update(path.as_bytes());
        let key: [u8; 32] = h.finalize().into();
        Self {
            seed,
            path,
            inner: ChaCha20Rng::from_seed(key),
        }
    }

    /// Independent child stream; does not consume draws from `self`.
    pub fn substream(&self, name: &str) -> Self {
        Self::keyed(self.seed, format!("{}/{}", self.path, name))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> &str {
        &self.path
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn int_inclusive(&mut self, lo: usize, hi: usize) -> usize {
        self.inner.random_range(lo..=hi)
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }
}
