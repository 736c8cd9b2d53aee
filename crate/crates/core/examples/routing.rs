//! Shows which branch serves each test patient once some clinical records are withheld,
//! and that the routed output is exactly the serving branch's output.
//!
//!     cargo run --release --example routing

use bidistill::data::{apply_missingness, synth_generate, Modality, SynthConfig};
use bidistill::experiment::{resolve_splits, standardize_splits};
use bidistill::model::{route, Predictor, Route};
use bidistill::train::{train_bd, TrainConfig};

fn main() -> bidistill::Result<()> {
    let raw = synth_generate(&SynthConfig::default())?;
    let (splits, _) = standardize_splits(&resolve_splits(&raw, 0)?)?;
    let cfg = TrainConfig {
        lr: 1e-3,
        max_epochs: 10,
        ..TrainConfig::default()
    };
    let (model, _) = train_bd(&splits.train, &splits.val, &cfg)?;

    let masked = apply_missingness(&splits.test, 0.5, Modality::Clinical, 7)?;
    let (mut multi, mut single) = (0, 0);
    for s in masked.samples.iter().take(8) {
        let p = model.predict(s)?;
        let (which, direct) = match route(s, model.config())? {
            Route::Multi => ("multi", model.multi.forward_sample(s)?.probs),
            Route::Single => ("single", model.single.forward_sample(s)?.probs),
        };
        assert_eq!(p, direct);
        println!("{:8} clinical {:5} -> {which:6} p(positive) {:.3} label {}", s.id, s.has(Modality::Clinical), p[1], s.label);
    }
    for s in &masked.samples {
        match route(s, model.config())? {
            Route::Multi => multi += 1,
            Route::Single => single += 1,
        }
    }
    println!("{multi} patients served by the multi-modal branch, {single} by the single-modal branch");
    Ok(())
}
