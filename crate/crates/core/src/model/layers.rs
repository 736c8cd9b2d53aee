use crate::error::Result;
use crate::numcore::ops::{
    accumulate_bias_grad, accumulate_weight_grad, linear_backward_input, linear_forward, relu,
    relu_backward,
};
use crate::numcore::{DenseArray, ParamId, ParamStore, RngStream};

/// Fully connected layer whose weights live in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Linear {
    pub(crate) w: ParamId,
    pub(crate) b: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let w = store.add_glorot(format!("{name}.w"), fan_in, fan_out, rng)?;
        let b = store.add(format!("{name}.b"), DenseArray::zeros(1, fan_out))?;
        Ok(Self {
            w,
            b,
            fan_in,
            fan_out,
        })
    }

    pub fn forward(&self, store: &ParamStore, x: &DenseArray) -> Result<DenseArray> {
        linear_forward(x, store.value(self.w), store.value(self.b))
    }

    pub fn forward_vec(&self, store: &ParamStore, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .forward(store, &DenseArray::row_vector(x.to_vec()))?
            .into_vec())
    }

    /// Accumulates weight and bias gradients, returns the input gradient.
    pub fn backward(
        &self,
        store: &mut ParamStore,
        x: &DenseArray,
        dy: &DenseArray,
    ) -> Result<DenseArray> {
        let dx = linear_backward_input(store.value(self.w), dy)?;
        accumulate_weight_grad(x, dy, store.grad_mut(self.w))?;
        accumulate_bias_grad(dy, store.grad_mut(self.b))?;
        Ok(dx)
    }

    pub fn backward_vec(&self, store: &mut ParamStore, x: &[f64], dy: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .backward(
                store,
                &DenseArray::row_vector(x.to_vec()),
                &DenseArray::row_vector(dy.to_vec()),
            )?
            .into_vec())
    }

    /// Input gradient only; parameter gradients are left untouched.
    pub fn backward_input(&self, store: &ParamStore, dy: &[f64]) -> Result<Vec<f64>> {
        Ok(linear_backward_input(store.value(self.w), &DenseArray::row_vector(dy.to_vec()))?.into_vec())
    }
}

#[derive(Clone, Debug)]
struct Dense {
    lin: Linear,
    relu: bool,
}

/// A stack of fully connected layers, each optionally followed by ReLU.
#[derive(Clone, Debug)]
pub struct Stack {
    layers: Vec<Dense>,
}

/// Activations saved by [`Stack::forward`]: `acts[0]` is the input, `acts[i + 1]` the
/// output of layer `i` (after its activation).
#[derive(Clone, Debug)]
pub struct StackCache {
    acts: Vec<DenseArray>,
}

impl StackCache {
    pub fn output(&self) -> &DenseArray {
        self.acts.last().expect("non-empty cache")
    }
}

impl Stack {
    /// `dims = [in, h1, ..., out]`; `relu_last` controls the activation on the last layer.
    /// Hidden layers always use ReLU.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dims: &[usize],
        relu_last: bool,
        rng: &mut RngStream,
    ) -> Result<Self> {
        assert!(dims.len() >= 2, "a stack needs at least one layer");
        let n = dims.len() - 1;
        let mut layers = Vec::with_capacity(n);
        for i in 0..n {
            layers.push(Dense {
                lin: Linear::new(store, &format!("{name}.{i}"), dims[i], dims[i + 1], rng)?,
                relu: i + 1 < n || relu_last,
            });
        }
        Ok(Self { layers })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].lin.fan_in
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("layers").lin.fan_out
    }

    pub fn forward(&self, store: &ParamStore, x: &DenseArray) -> Result<StackCache> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for layer in &self.layers {
            let z = layer.lin.forward(store, acts.last().expect("input"))?;
            acts.push(if layer.relu { relu(&z) } else { z });
        }
        Ok(StackCache { acts })
    }

    pub fn forward_only(&self, store: &ParamStore, x: &DenseArray) -> Result<DenseArray> {
        let mut h = x.clone();
        for layer in &self.layers {
            let z = layer.lin.forward(store, &h)?;
            h = if layer.relu { relu(&z) } else { z };
        }
        Ok(h)
    }

    /// Accumulates all layer gradients; returns the gradient w.r.t. the stack input.
    pub fn backward(
        &self,
        store: &mut ParamStore,
        cache: &StackCache,
        dy: &DenseArray,
    ) -> Result<DenseArray> {
        let mut grad = dy.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if layer.relu {
                grad = relu_backward(&cache.acts[i + 1], &grad)?;
            }
            grad = layer.lin.backward(store, &cache.acts[i], &grad)?;
        }
        Ok(grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stack_dims_and_zero_params() {
        let mut store = ParamStore::new();
        let mut rng = RngStream::new(0).substream("init");
        let s = Stack::new(&mut store, "m", &[3, 5, 2], false, &mut rng).unwrap();
        assert_eq!((s.in_dim(), s.out_dim()), (3, 2));
        assert_eq!(store.len(), 4);
        assert!(store.id("m.1.b").is_some());
        store.zero_values();
        let y = s
            .forward_only(&store, &DenseArray::row_vector(vec![1.0, 2.0, 3.0]))
            .unwrap();
        assert_eq!(y.as_slice(), &[0.0, 0.0]);
    }
}
