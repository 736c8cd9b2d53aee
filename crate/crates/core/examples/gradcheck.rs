//! Finite-difference checks of every hand-written backward pass, plus the contracts on
//! which parameters each objective may touch.
//!
//!     cargo run --example gradcheck

use bidistill::gradchecks::{render_results, run_gradchecks, GradCheckOptions};

fn main() -> bidistill::Result<()> {
    let results = run_gradchecks(&GradCheckOptions::default())?;
    print!("{}", render_results(&results));

    // A deliberately wrong gradient must be caught.
    let broken = run_gradchecks(&GradCheckOptions { corrupt: true, ..GradCheckOptions::default() })?;
    assert!(broken.iter().any(|r| !r.passed()));
    println!("corrupted gradient detected");
    Ok(())
}
