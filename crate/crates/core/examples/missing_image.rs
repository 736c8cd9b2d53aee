//! The mirrored setting: the image is the modality that may be missing and the clinical
//! record is always kept.
//!
//!     cargo run --release --example missing_image

use bidistill::data::{synth_generate, Modality, SynthConfig};
use bidistill::evalkit::{format_table, SweepConfig};
use bidistill::experiment::{compare_methods, resolve_splits, standardize_splits};
use bidistill::train::{Method, TrainConfig};

fn main() -> bidistill::Result<()> {
    let raw = synth_generate(&SynthConfig::default())?;
    let (splits, _) = standardize_splits(&resolve_splits(&raw, 0)?)?;
    let cfg = TrainConfig {
        lr: 1e-3,
        max_epochs: 30,
        patience: 5,
        missing_role: Modality::Image,
        ..TrainConfig::default()
    };
    let sweep = SweepConfig {
        rates: vec![0.0, 1.0],
        ..SweepConfig::default()
    };
    let reports = compare_methods(&[Method::Bd, Method::Filling], &splits, &cfg, &[1, 2], &sweep)?;
    print!("{}", format_table(&reports));
    Ok(())
}
