pub mod baselines;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod evalkit;
pub mod experiment;
pub mod gradchecks;
pub mod losses;
pub mod model;
pub mod numcore;
pub mod train;

pub use error::{Error, Result};
