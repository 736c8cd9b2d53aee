//! Every method on the same splits and masks, with deltas against feature filling and a
//! report written as CSV, JSON and SVG.
//!
//!     cargo run --release --example compare_methods -- [out_dir]

use bidistill::data::{synth_generate, SynthConfig};
use bidistill::evalkit::{emit_report, format_table, ReportFormat, SweepConfig};
use bidistill::experiment::{compare_methods, resolve_splits, standardize_splits};
use bidistill::train::{Method, TrainConfig};

fn main() -> bidistill::Result<()> {
    let out = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("bidistill-compare"));
    let raw = synth_generate(&SynthConfig::default())?;
    let (splits, _) = standardize_splits(&resolve_splits(&raw, 0)?)?;

    let cfg = TrainConfig {
        lr: 1e-3,
        max_epochs: 20,
        patience: 5,
        ..TrainConfig::default()
    };
    let reports = compare_methods(&Method::ALL, &splits, &cfg, &[1, 2], &SweepConfig::default())?;
    print!("{}", format_table(&reports));

    for path in emit_report(&reports, &out, &[ReportFormat::Csv, ReportFormat::Json, ReportFormat::Svg])? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
