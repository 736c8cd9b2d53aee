//! Samples, manifest I/O, synthetic generation, splitting and missingness simulation.

mod manifest;
mod missing;
mod sample;
mod split;
mod standardize;
mod synth;

pub use manifest::{
    bag_to_string, load_manifest, read_bag, write_dataset, CLINICAL_FIELDS, MANIFEST_FILE,
    MANIFEST_HEADER,
};
pub use missing::{apply_missingness, unmask, MissingMask};
pub use sample::{Dataset, Modality, Presence, Sample, Split};
pub use split::{split_dataset, SplitFractions, Splits};
pub use standardize::Standardizer;
pub use synth::{synth_directions, synth_generate, SynthConfig};
