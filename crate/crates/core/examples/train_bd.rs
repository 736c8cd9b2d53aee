//! Trains the two-branch model on synthetic data, then evaluates it as the clinical
//! record goes missing for more and more test patients.
//!
//!     cargo run --release --example train_bd

use bidistill::data::{synth_generate, SynthConfig};
use bidistill::evalkit::{format_table, sweep_missing_rates, SweepConfig};
use bidistill::experiment::{resolve_splits, standardize_splits};
use bidistill::train::{train_bd, TrainConfig};

fn main() -> bidistill::Result<()> {
    let raw = synth_generate(&SynthConfig::default())?;
    let (splits, _) = standardize_splits(&resolve_splits(&raw, 0)?)?;

    let cfg = TrainConfig {
        lr: 1e-3,
        max_epochs: 30,
        patience: 5,
        seed: 1,
        ..TrainConfig::default()
    };
    let (model, log) = train_bd(&splits.train, &splits.val, &cfg)?;
    print!("{}", log.to_csv());
    println!("best epoch {}, stopped after {}", log.best_epoch, log.stop_epoch);

    let reports = sweep_missing_rates(&[&model], &splits.test, &SweepConfig::default())?;
    print!("{}", format_table(&reports));
    Ok(())
}
