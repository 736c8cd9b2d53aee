//! Generates the default synthetic cohort, writes it in manifest form and reads it back.
//!
//!     cargo run --example synth_dataset -- [out_dir]

use bidistill::data::{load_manifest, synth_generate, write_dataset, Split, SynthConfig, MANIFEST_FILE};
use bidistill::experiment::resolve_splits;

fn main() -> bidistill::Result<()> {
    let out = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("bidistill-synth"));
    let cfg = SynthConfig::default();
    // Merging the splits back stores each sample's split tag with the data.
    let ds = resolve_splits(&synth_generate(&cfg)?, cfg.seed)?.merged();
    write_dataset(&ds, &out)?;

    let back = load_manifest(&out.join(MANIFEST_FILE))?;
    assert_eq!(back.len(), ds.len());
    println!("wrote {} samples to {}", back.len(), out.display());
    println!("image dim {}, clinical dim {}", back.d_w, back.d_c);
    for split in [Split::Train, Split::Val, Split::Test] {
        let part = back.subset(split);
        println!("{:5} {:3} samples, {:3} positive", split.as_str(), part.len(), part.count_label(1));
    }
    let patches: Vec<usize> = back.samples.iter().map(|s| s.bag.rows()).collect();
    println!("patches per bag: {}..={}", patches.iter().min().unwrap(), patches.iter().max().unwrap());
    Ok(())
}
