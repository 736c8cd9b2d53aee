//! Saves a trained model with its standardizer, reloads it and checks the predictions are
//! bit-identical.
//!
//!     cargo run --release --example checkpoint_roundtrip

use bidistill::checkpoint::Checkpoint;
use bidistill::data::{synth_generate, Standardizer, SynthConfig};
use bidistill::evalkit::positive_scores;
use bidistill::experiment::{resolve_splits, standardize_splits, standardized};
use bidistill::train::{train_method, Method, TrainConfig, TrainedModel};

fn main() -> bidistill::Result<()> {
    let raw = synth_generate(&SynthConfig::default())?;
    let raw_splits = resolve_splits(&raw, 0)?;
    let (splits, st) = standardize_splits(&raw_splits)?;
    let cfg = TrainConfig {
        lr: 1e-3,
        max_epochs: 5,
        ..TrainConfig::default()
    };
    let (model, _) = train_method(Method::Bd, &splits.train, &splits.val, &cfg)?;

    let path = std::env::temp_dir().join("bidistill-example.bdck");
    let meta = serde_json::json!({ "standardizer": st, "train": cfg });
    model.to_checkpoint(&cfg.model_config(raw.d_w, raw.d_c), meta).save(&path)?;

    let ck = Checkpoint::load(&path)?;
    let restored = TrainedModel::from_checkpoint(&ck)?;
    let st_back: Standardizer = ck.meta_field("standardizer")?;
    let test = standardized(&raw_splits.test, &st_back)?;

    let before = positive_scores(model.predictor(), &splits.test)?;
    let after = positive_scores(restored.predictor(), &test)?;
    assert!(before.iter().zip(&after).all(|(a, b)| a.to_bits() == b.to_bits()));
    println!("{} ({} bytes): {} test scores identical after reload", path.display(), std::fs::metadata(&path).map_or(0, |m| m.len()), after.len());
    Ok(())
}
