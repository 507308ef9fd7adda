//! Runs the randomized property suites, including one with an unsafe smoothness weighting.

use puzzlemix::validate::{run_validation, ValidateOptions};

fn main() -> puzzlemix::Result<()> {
    let opts = ValidateOptions { trials: 200, ..Default::default() };
    print!("{}", run_validation(&opts)?);
    println!();
    let unsafe_weights = ValidateOptions { beta: 0.4, gamma: 0.9, ..opts };
    print!("{}", run_validation(&unsafe_weights)?);
    Ok(())
}
