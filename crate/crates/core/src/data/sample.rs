use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::DenseArray;

/// One of the two input channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Image,
    #[default]
    Clinical,
}

impl Modality {
    pub fn other(self) -> Self {
        match self {
            Modality::Image => Modality::Clinical,
            Modality::Clinical => Modality::Image,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Image => "image",
            Modality::Clinical => "clinical",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "image" => Ok(Modality::Image),
            "clinical" => Ok(Modality::Clinical),
            other => Err(Error::Config(format!(
                "invalid modality role {other:?} (expected clinical or image)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Option<Self>> {
        match s {
            "" => Ok(None),
            "train" => Ok(Some(Split::Train)),
            "val" => Ok(Some(Split::Val)),
            "test" => Ok(Some(Split::Test)),
            other => Err(Error::Data(format!("unknown split {other:?}"))),
        }
    }
}

/// Which modalities are visible to a model. Underlying data is never dropped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Presence {
    pub image: bool,
    pub clinical: bool,
}

impl Presence {
    pub const BOTH: Presence = Presence {
        image: true,
        clinical: true,
    };

    pub fn has(self, m: Modality) -> bool {
        match m {
            Modality::Image => self.image,
            Modality::Clinical => self.clinical,
        }
    }

    pub fn set(&mut self, m: Modality, present: bool) {
        match m {
            Modality::Image => self.image = present,
            Modality::Clinical => self.clinical = present,
        }
    }
}

/// One case: a bag of patch features, an optional clinical record and a binary label.
#[derive(Clone, Debug)]
pub struct Sample {
    pub id: String,
    pub label: usize,
    pub bag: Arc<DenseArray>,
    pub clinical: Option<Vec<f64>>,
    pub presence: Presence,
    pub split: Option<Split>,
}

impl Sample {
    pub fn new(
        id: impl Into<String>,
        label: usize,
        bag: DenseArray,
        clinical: Option<Vec<f64>>,
    ) -> Result<Self> {
        let id = id.into();
        if label > 1 {
            return Err(Error::Data(format!("sample {id}: label {label} is not binary")));
        }
        let presence = Presence {
            image: true,
            clinical: clinical.is_some(),
        };
        Ok(Self {
            id,
            label,
            bag: Arc::new(bag),
            clinical,
            presence,
            split: None,
        })
    }

    /// The patch bag, if the image modality is visible.
    pub fn image(&self) -> Option<&DenseArray> {
        self.presence.image.then(|| self.bag.as_ref())
    }

    /// The clinical vector, if recorded and visible.
    pub fn clinical(&self) -> Option<&[f64]> {
        if self.presence.clinical {
            self.clinical.as_deref()
        } else {
            None
        }
    }

    pub fn has(&self, m: Modality) -> bool {
        match m {
            Modality::Image => self.image().is_some(),
            Modality::Clinical => self.clinical().is_some(),
        }
    }

    pub fn is_complete(&self) -> bool {
        self.has(Modality::Image) && self.has(Modality::Clinical)
    }
}

/// An immutable collection of samples sharing feature dimensions.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub d_w: usize,
    pub d_c: usize,
    pub(crate) standardized: bool,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, d_w: usize, d_c: usize) -> Result<Self> {
        for s in &samples {
            if s.bag.cols() != d_w {
                return Err(Error::Data(format!(
                    "sample {}: patch dim {} != {d_w}",
                    s.id,
                    s.bag.cols()
                )));
            }
            if let Some(c) = &s.clinical {
                if c.len() != d_c {
                    return Err(Error::Data(format!(
                        "sample {}: clinical length {} != {d_c}",
                        s.id,
                        c.len()
                    )));
                }
            }
        }
        Ok(Self {
            samples,
            d_w,
            d_c,
            standardized: false,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn ids(&self) -> Vec<String> {
        self.samples.iter().map(|s| s.id.clone()).collect()
    }

    /// Samples assigned to `split`, sharing dims and standardization state.
    pub fn subset(&self, split: Split) -> Dataset {
        self.filter(|s| s.split == Some(split))
    }

    pub fn filter(&self, keep: impl Fn(&Sample) -> bool) -> Dataset {
        Dataset {
            samples: self.samples.iter().filter(|s| keep(s)).cloned().collect(),
            d_w: self.d_w,
            d_c: self.d_c,
            standardized: self.standardized,
        }
    }

    pub fn with_samples(&self, samples: Vec<Sample>) -> Dataset {
        Dataset {
            samples,
            d_w: self.d_w,
            d_c: self.d_c,
            standardized: self.standardized,
        }
    }

    pub fn count_label(&self, label: usize) -> usize {
        self.samples.iter().filter(|s| s.label == label).count()
    }
}
