//! Switches each distillation direction on and off, or sweeps the prompt length or the
//! loss weights.
//!
//!     cargo run --release --example ablation -- [directions|prompt-length|lambda]

use bidistill::data::{synth_generate, SynthConfig};
use bidistill::evalkit::{mean_rows, SweepConfig};
use bidistill::experiment::{resolve_splits, run_study, standardize_splits, Study};
use bidistill::train::TrainConfig;

fn main() -> bidistill::Result<()> {
    let study: Study = std::env::args().nth(1).as_deref().unwrap_or("directions").parse()?;
    let raw = synth_generate(&SynthConfig::default())?;
    let (splits, _) = standardize_splits(&resolve_splits(&raw, 0)?)?;

    let cfg = TrainConfig {
        lr: 1e-3,
        max_epochs: 30,
        patience: 5,
        ..TrainConfig::default()
    };
    let sweep = SweepConfig {
        rates: study.default_rates(),
        ..SweepConfig::default()
    };
    let reports = run_study(study, &splits, &cfg, &[1, 2, 3], &sweep)?;
    println!("{:14} {:>5} {:>7} {:>7}", "variant", "rate", "auc", "f1");
    for (name, rate, auc, f1) in mean_rows(&reports) {
        println!("{name:14} {rate:5.2} {auc:7.4} {f1:7.4}");
    }
    Ok(())
}
