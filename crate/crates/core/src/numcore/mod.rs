//! Dense numeric kernel: arrays, layer and loss primitives, SGD, RNG, gradient checks.

mod array;
mod gradcheck;
pub mod ops;
mod optim;
mod params;
mod rng;

pub use array::DenseArray;
pub use gradcheck::{grad_check, GradCheckEntry, GradCheckReport};
pub use optim::{sgd_step, SgdConfig, SgdState};
pub use params::{Param, ParamHost, ParamId, ParamStore};
pub use rng::RngStream;
