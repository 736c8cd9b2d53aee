use serde::{Deserialize, Serialize};

use super::sample::Dataset;
use crate::error::{Error, Result};

/// Per-column clinical standardization fitted on the training split.
///
/// Columns whose training values are all 0/1 are markers and pass through unchanged;
/// every other column is z-scored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub binary: Vec<bool>,
}

impl Standardizer {
    pub fn fit(train: &Dataset) -> Result<Self> {
        if train.standardized {
            return Err(Error::Data("cannot fit on an already standardized dataset".into()));
        }
        let records: Vec<&Vec<f64>> = train.samples.iter().filter_map(|s| s.clinical.as_ref()).collect();
        if records.is_empty() {
            return Err(Error::Data("no clinical records to fit standardization".into()));
        }
        let d = train.d_c;
        let n = records.len() as f64;
        let mut mean = vec![0.0; d];
        let mut std = vec![1.0; d];
        let mut binary = vec![true; d];
        for k in 0..d {
            let col = records.iter().map(|r| r[k]);
            binary[k] = col.clone().all(|v| v == 0.0 || v == 1.0);
            if binary[k] {
                mean[k] = 0.0;
                continue;
            }
            let m = col.clone().sum::<f64>() / n;
            let var = col.map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            mean[k] = m;
            std[k] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        Ok(Self { mean, std, binary })
    }

    pub fn transform(&self, record: &[f64]) -> Vec<f64> {
        record
            .iter()
            .enumerate()
            .map(|(k, &v)| if self.binary[k] { v } else { (v - self.mean[k]) / self.std[k] })
            .collect()
    }

    /// Standardizes every clinical record in place. A dataset is standardized at most once.
    pub fn apply(&self, ds: &mut Dataset) -> Result<()> {
        if ds.standardized {
            return Err(Error::Data("dataset is already standardized".into()));
        }
        if ds.d_c != self.mean.len() {
            return Err(Error::dim("standardize", (1, ds.d_c), (1, self.mean.len())));
        }
        for s in &mut ds.samples {
            if let Some(c) = &s.clinical {
                s.clinical = Some(self.transform(c));
            }
        }
        ds.standardized = true;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Sample;
    use crate::numcore::DenseArray;

    fn ds(records: &[[f64; 2]]) -> Dataset {
        let samples = records
            .iter()
            .enumerate()
            .map(|(i, r)| Sample::new(format!("s{i}"), i % 2, DenseArray::zeros(1, 1), Some(r.to_vec())).unwrap())
            .collect();
        Dataset::new(samples, 1, 2).unwrap()
    }

    #[test]
    fn continuous_zscored_binary_kept() {
        let mut d = ds(&[[10.0, 1.0], [20.0, 0.0], [30.0, 1.0]]);
        let st = Standardizer::fit(&d).unwrap();
        assert_eq!(st.binary, vec![false, true]);
        st.apply(&mut d).unwrap();
        let c = d.samples[1].clinical.as_ref().unwrap();
        assert_eq!(c, &vec![0.0, 0.0]);
        assert!(d.samples[0].clinical.as_ref().unwrap()[0] < 0.0);
    }

    #[test]
    fn double_application_rejected() {
        let mut d = ds(&[[1.0, 0.0], [2.0, 1.0]]);
        let st = Standardizer::fit(&d).unwrap();
        st.apply(&mut d).unwrap();
        assert!(st.apply(&mut d).is_err());
        assert!(Standardizer::fit(&d).is_err());
    }
}
