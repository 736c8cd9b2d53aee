//! Trains briefly and exports the attention-pooled image feature of every sample as CSV.
//!
//!     cargo run --release --example export_features -- [out.csv]

use bidistill::data::{synth_generate, SynthConfig};
use bidistill::experiment::{resolve_splits, standardize_splits};
use bidistill::model::export_features;
use bidistill::train::{train_bd, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("bidistill-features.csv"));
    let raw = synth_generate(&SynthConfig::default())?;
    let (splits, _) = standardize_splits(&resolve_splits(&raw, 0)?)?;
    let cfg = TrainConfig {
        lr: 1e-3,
        max_epochs: 5,
        ..TrainConfig::default()
    };
    let (model, _) = train_bd(&splits.train, &splits.val, &cfg)?;
    export_features(&model.multi, &splits.merged(), &out)?;
    let text = std::fs::read_to_string(&out)?;
    println!("{} rows written to {}", text.lines().count() - 1, out.display());
    let header: Vec<&str> = text.lines().next().unwrap_or_default().split(',').collect();
    println!("columns: {} ... {} ({} features)", header[..4].join(","), header[header.len() - 1], header.len() - 2);
    Ok(())
}
