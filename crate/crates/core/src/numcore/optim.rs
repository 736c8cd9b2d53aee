use super::array::DenseArray;
use super::params::ParamStore;
use crate::error::{Error, Result};

/// Hyperparameters of SGD with momentum and L2 weight decay.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            momentum: 0.3,
            weight_decay: 1e-3,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("learning rate must be >= 0, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!(
                "weight decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// Velocity buffers for one [`ParamStore`], indexed in store order.
#[derive(Clone, Debug)]
pub struct SgdState {
    pub config: SgdConfig,
    velocity: Vec<DenseArray>,
}

impl SgdState {
    pub fn new(store: &ParamStore, config: SgdConfig) -> Result<Self> {
        config.validate()?;
        let velocity = store
            .iter()
            .map(|p| DenseArray::zeros(p.value.rows(), p.value.cols()))
            .collect();
        Ok(Self { config, velocity })
    }

    pub fn velocity(&self, index: usize) -> &DenseArray {
        &self.velocity[index]
    }
}

/// For each trainable θ: `v ← μv − η(g + ωθ)`, `θ ← θ + v`. Gradients are zeroed afterwards.
pub fn sgd_step(store: &mut ParamStore, state: &mut SgdState) {
    let SgdConfig {
        lr,
        momentum,
        weight_decay,
    } = state.config;
    assert_eq!(store.len(), state.velocity.len(), "SgdState built for another store");
    for (p, v) in store.iter_mut().zip(state.velocity.iter_mut()) {
        if p.trainable {
            let vs = v.as_mut_slice();
            let gs = p.grad.as_slice();
            for ((theta, vel), &g) in p.value.as_mut_slice().iter_mut().zip(vs).zip(gs) {
                *vel = momentum * *vel - lr * (g + weight_decay * *theta);
                if *vel != 0.0 {
                    *theta += *vel;
                }
            }
        }
        p.grad.fill(0.0);
    }
}
