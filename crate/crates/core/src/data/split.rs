use super::sample::{Dataset, Split};
use crate::error::{Error, Result};
use crate::numcore::RngStream;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    /// 80/20 train/test, then 20% of train held out for validation.
    fn default() -> Self {
        Self {
            train: 0.64,
            val: 0.16,
            test: 0.20,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

impl Splits {
    /// Reassembles a single dataset carrying split tags (train, val, test order).
    pub fn merged(&self) -> Dataset {
        let mut samples = self.train.samples.clone();
        samples.extend(self.val.samples.iter().cloned());
        samples.extend(self.test.samples.iter().cloned());
        self.train.with_samples(samples)
    }

    /// Partitions a dataset by its existing split tags.
    pub fn from_tags(ds: &Dataset) -> Result<Self> {
        if let Some(s) = ds.samples.iter().find(|s| s.split.is_none()) {
            return Err(Error::Data(format!("sample {} has no split assignment", s.id)));
        }
        Ok(Self {
            train: ds.subset(Split::Train),
            val: ds.subset(Split::Val),
            test: ds.subset(Split::Test),
        })
    }
}

/// Stratified split. Within each class, `round(n_c * test)` samples go to test and
/// `round(n_c * val)` to validation, drawn from a seeded permutation; the rest train.
/// Samples keep their original relative order inside each split.
pub fn split_dataset(ds: &Dataset, fractions: SplitFractions, seed: u64) -> Result<Splits> {
    let SplitFractions { train, val, test } = fractions;
    if [train, val, test].iter().any(|f| !(0.0..=1.0).contains(f)) || ((train + val + test) - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions must be in [0,1] and sum to 1, got {train}/{val}/{test}"
        )));
    }
    let mut assign = vec![Split::Train; ds.len()];
    let rng = RngStream::new(seed).substream("split");
    for label in 0..2usize {
        let members: Vec<usize> = (0..ds.len()).filter(|&i| ds.samples[i].label == label).collect();
        let n = members.len();
        let n_test = (n as f64 * test).round() as usize;
        let n_val = ((n as f64 * val).round() as usize).min(n - n_test);
        let mut r = rng.substream(&format!("class{label}"));
        let perm = r.permutation(n);
        for (k, &p) in perm.iter().enumerate() {
            let idx = members[p];
            assign[idx] = if k < n_test {
                Split::Test
            } else if k < n_test + n_val {
                Split::Val
            } else {
                Split::Train
            };
        }
        let counts = [n - n_test - n_val, n_val, n_test];
        for (c, (name, frac)) in counts.iter().zip([("train", train), ("val", val), ("test", test)]) {
            if *c == 0 && frac > 0.0 {
                return Err(Error::Split(format!("{name} split receives no samples of class {label}")));
            }
        }
    }
    let mut tagged = ds.clone();
    for (s, a) in tagged.samples.iter_mut().zip(&assign) {
        s.split = Some(*a);
    }
    Splits::from_tags(&tagged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Sample;
    use crate::numcore::DenseArray;

    fn balanced(n: usize) -> Dataset {
        let samples = (0..n)
            .map(|i| Sample::new(format!("s{i:03}"), i % 2, DenseArray::zeros(1, 1), Some(vec![0.0])).unwrap())
            .collect();
        Dataset::new(samples, 1, 1).unwrap()
    }

    #[test]
    fn hundred_balanced_gives_64_16_20() {
        let s = split_dataset(&balanced(100), SplitFractions::default(), 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (64, 16, 20));
        for part in [&s.train, &s.val, &s.test] {
            assert!((part.count_label(1) as i64 - part.count_label(0) as i64).abs() <= 1);
        }
    }

    #[test]
    fn deterministic_membership() {
        let a = split_dataset(&balanced(60), SplitFractions::default(), 9).unwrap();
        let b = split_dataset(&balanced(60), SplitFractions::default(), 9).unwrap();
        let c = split_dataset(&balanced(60), SplitFractions::default(), 10).unwrap();
        assert_eq!(a.test.ids(), b.test.ids());
        assert_ne!(a.test.ids(), c.test.ids());
    }

    #[test]
    fn tiny_class_triggers_split_error() {
        let mut ds = balanced(10);
        for s in &mut ds.samples {
            s.label = 0;
        }
        ds.samples[0].label = 1;
        assert!(matches!(
            split_dataset(&ds, SplitFractions::default(), 0),
            Err(Error::Split(_))
        ));
    }

    #[test]
    fn bad_fractions() {
        let f = SplitFractions {
            train: 0.5,
            val: 0.1,
            test: 0.1,
        };
        assert!(split_dataset(&balanced(10), f, 0).is_err());
    }
}
