use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::branch::{MultiModalBranch, SingleModalBranch};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numcore::DenseArray;

/// A branch that can produce the pooled image feature of a bag.
pub trait PooledImageSource {
    fn pooled(&self, bag: &DenseArray) -> Result<Vec<f64>>;
}

impl PooledImageSource for MultiModalBranch {
    fn pooled(&self, bag: &DenseArray) -> Result<Vec<f64>> {
        self.pooled_image(bag)
    }
}

impl PooledImageSource for SingleModalBranch {
    fn pooled(&self, bag: &DenseArray) -> Result<Vec<f64>> {
        self.pooled_image(bag)
    }
}

/// CSV text: `sample_id,label,f0,...` with one row per sample.
pub fn features_csv(branch: &dyn PooledImageSource, dataset: &Dataset) -> Result<String> {
    let mut rows = Vec::with_capacity(dataset.len());
    for s in &dataset.samples {
        rows.push((s.id.as_str(), s.label, branch.pooled(&s.bag)?));
    }
    let dim = rows.first().map_or(0, |r| r.2.len());
    let mut out = String::from("sample_id,label");
    for k in 0..dim {
        let _ = write!(out, ",f{k}");
    }
    out.push('\n');
    for (id, label, feat) in rows {
        let _ = write!(out, "{id},{label}");
        for v in feat {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn export_features(branch: &dyn PooledImageSource, dataset: &Dataset, path: &Path) -> Result<()> {
    let text = features_csv(branch, dataset)?;
    fs::write(path, text).map_err(|e| Error::file(path, e))
}
