use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use super::array::DenseArray;
use super::rng::RngStream;
use crate::error::{Error, Result};

/// Handle to a parameter inside one [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub value: DenseArray,
    pub grad: DenseArray,
    pub trainable: bool,
}

/// Named parameters with gradient slots, kept in insertion order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    index: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: DenseArray) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name {name}")));
        }
        let grad = DenseArray::zeros(value.rows(), value.cols());
        let id = self.params.len();
        self.index.insert(name.clone(), id);
        self.params.push(Param {
            name,
            value,
            grad,
            trainable: true,
        });
        Ok(ParamId(id))
    }

    /// Glorot-uniform weight `fan_in x fan_out`.
    pub fn add_glorot(
        &mut self,
        name: impl Into<String>,
        fan_in: usize,
        fan_out: usize,
        rng: &mut RngStream,
    ) -> Result<ParamId> {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut w = DenseArray::zeros(fan_in, fan_out);
        for v in w.as_mut_slice() {
            *v = rng.uniform_range(-limit, limit);
        }
        self.add(name, w)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &DenseArray {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut DenseArray {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &DenseArray {
        &self.params[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut DenseArray {
        &mut self.params[id.0].grad
    }

    /// Value and gradient slot at once (value borrowed immutably).
    pub fn split_mut(&mut self, id: ParamId) -> (&DenseArray, &mut DenseArray) {
        let p = &mut self.params[id.0];
        (&p.value, &mut p.grad)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn names(&self) -> Vec<String> {
        self.params.iter().map(|p| p.name.clone()).collect()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    pub fn set_all_trainable(&mut self, trainable: bool) {
        for p in &mut self.params {
            p.trainable = trainable;
        }
    }

    pub fn set_trainable_where(&mut self, pred: impl Fn(&str) -> bool) {
        for p in &mut self.params {
            p.trainable = pred(&p.name);
        }
    }

    pub fn zero_values(&mut self) {
        for p in &mut self.params {
            p.value.fill(0.0);
        }
    }

    pub fn grads_finite(&self) -> bool {
        self.params.iter().all(|p| p.grad.all_finite())
    }

    /// SHA-256 over names, shapes and value bits of the parameters selected by `pred`.
    pub fn digest_where(&self, pred: impl Fn(&str) -> bool) -> [u8; 32] {
        let mut h = Sha256::new();
        for p in self.params.iter().filter(|p| pred(&p.name)) {
            h.update(p.name.as_bytes());
            h.update((p.value.rows() as u64).to_le_bytes());
            h.update((p.value.cols() as u64).to_le_bytes());
            for v in p.value.as_slice() {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        h.finalize().into()
    }

    pub fn digest(&self) -> [u8; 32] {
        self.digest_where(|_| true)
    }

    /// Copies values from `other` for every name present in both with equal shape.
    pub fn copy_values_from(&mut self, other: &ParamStore) -> Result<()> {
        for p in &mut self.params {
            if let Some(&j) = other.index.get(&p.name) {
                let src = &other.params[j].value;
                p.value.same_shape(src, "copy_values_from")?;
                p.value.as_mut_slice().copy_from_slice(src.as_slice());
            }
        }
        Ok(())
    }
}

/// Anything owning one or more parameter stores (a branch, a baseline, a toy pair).
pub trait ParamHost {
    fn stores(&self) -> Vec<(&str, &ParamStore)>;
    fn stores_mut(&mut self) -> Vec<(&str, &mut ParamStore)>;

    fn zero_all_grads(&mut self) {
        for (_, s) in self.stores_mut() {
            s.zero_grads();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_rejected_and_grads_zeroed() {
        let mut s = ParamStore::new();
        let id = s.add("w", DenseArray::filled(2, 2, 1.5)).unwrap();
        assert!(s.add("w", DenseArray::zeros(1, 1)).is_err());
        s.grad_mut(id).fill(3.0);
        let before = s.value(id).clone();
        s.zero_grads();
        assert_eq!(s.grad(id).as_slice(), &[0.0; 4]);
        assert_eq!(s.value(id), &before);
    }

    #[test]
    fn digest_tracks_values_only() {
        let mut s = ParamStore::new();
        let id = s.add("a", DenseArray::zeros(1, 3)).unwrap();
        let d0 = s.digest();
        s.grad_mut(id).fill(1.0);
        assert_eq!(d0, s.digest());
        s.value_mut(id).set(0, 1, 1e-300);
        assert_ne!(d0, s.digest());
    }

    #[test]
    fn glorot_bounds() {
        let mut s = ParamStore::new();
        let mut rng = RngStream::new(1).substream("init");
        let id = s.add_glorot("w", 10, 20, &mut rng).unwrap();
        let lim = (6.0f64 / 30.0).sqrt();
        assert!(s.value(id).as_slice().iter().all(|v| v.abs() <= lim));
    }
}
