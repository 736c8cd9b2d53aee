use std::collections::BTreeSet;

use super::sample::{Dataset, Modality};
use crate::error::{Error, Result};
use crate::numcore::RngStream;

/// Exact-count selection of samples whose `role` modality is withheld.
///
/// The masked set is a prefix of one seeded permutation of the sample list, so masks
/// for increasing rates under the same seed are nested.
#[derive(Clone, Debug, PartialEq)]
pub struct MissingMask {
    pub rate: f64,
    pub seed: u64,
    pub role: Modality,
    pub masked: BTreeSet<String>,
}

impl MissingMask {
    pub fn draw(ds: &Dataset, rate: f64, role: Modality, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::Config(format!("missing rate must lie in [0, 1], got {rate}")));
        }
        let n = ds.len();
        let count = (rate * n as f64).round() as usize;
        let perm = RngStream::new(seed).substream("mask").permutation(n);
        let masked = perm[..count].iter().map(|&i| ds.samples[i].id.clone()).collect();
        Ok(Self {
            rate,
            seed,
            role,
            masked,
        })
    }

    pub fn len(&self) -> usize {
        self.masked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masked.is_empty()
    }

    /// Copy of `ds` with the role modality flagged absent on masked samples.
    pub fn apply(&self, ds: &Dataset) -> Dataset {
        let mut out = ds.clone();
        for s in &mut out.samples {
            if self.masked.contains(&s.id) {
                s.presence.set(self.role, false);
            }
        }
        out
    }
}

pub fn apply_missingness(test: &Dataset, rate: f64, role: Modality, seed: u64) -> Result<Dataset> {
    Ok(MissingMask::draw(test, rate, role, seed)?.apply(test))
}

/// Restores presence flags from the underlying data.
pub fn unmask(ds: &Dataset) -> Dataset {
    let mut out = ds.clone();
    for s in &mut out.samples {
        s.presence.image = true;
        s.presence.clinical = s.clinical.is_some();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Sample;
    use crate::numcore::DenseArray;

    fn ds(n: usize) -> Dataset {
        let samples = (0..n)
            .map(|i| Sample::new(format!("t{i}"), i % 2, DenseArray::filled(1, 2, i as f64), Some(vec![i as f64])).unwrap())
            .collect();
        Dataset::new(samples, 2, 1).unwrap()
    }

    #[test]
    fn exact_counts() {
        let d = ds(200);
        assert_eq!(MissingMask::draw(&d, 0.0, Modality::Clinical, 1).unwrap().len(), 0);
        assert_eq!(MissingMask::draw(&d, 1.0, Modality::Clinical, 1).unwrap().len(), 200);
        assert_eq!(MissingMask::draw(&d, 0.8, Modality::Clinical, 1).unwrap().len(), 160);
        assert!(MissingMask::draw(&d, 1.5, Modality::Clinical, 1).is_err());
    }

    #[test]
    fn nested_across_rates() {
        let d = ds(57);
        let rates = [0.0, 0.1, 0.5, 0.8, 1.0];
        let masks: Vec<_> = rates
            .iter()
            .map(|&r| MissingMask::draw(&d, r, Modality::Clinical, 4).unwrap())
            .collect();
        for w in masks.windows(2) {
            assert!(w[0].masked.is_subset(&w[1].masked));
        }
    }

    #[test]
    fn non_destructive() {
        let d = ds(10);
        let masked = apply_missingness(&d, 0.5, Modality::Clinical, 2).unwrap();
        assert_eq!(masked.samples.iter().filter(|s| s.clinical().is_none()).count(), 5);
        let back = unmask(&masked);
        for (a, b) in back.samples.iter().zip(&d.samples) {
            assert_eq!(a.clinical(), b.clinical());
            assert_eq!(a.presence, b.presence);
            assert_eq!(a.bag, b.bag);
        }
        let img = apply_missingness(&d, 1.0, Modality::Image, 2).unwrap();
        assert!(img.samples.iter().all(|s| s.image().is_none() && s.clinical().is_some()));
    }
}
