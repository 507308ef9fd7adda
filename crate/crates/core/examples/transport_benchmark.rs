//! Timing and relative error of masked transport against the exact solver.
//!
//! Usage: `cargo run --release --example transport_benchmark [trials]`

use puzzlemix::bench::{format_summary, run_benchmark, summarize};

fn main() -> puzzlemix::Result<()> {
    let trials = std::env::args().nth(1).and_then(|t| t.parse().ok()).unwrap_or(10);
    let rows = run_benchmark(&[4, 16, 64, 256, 1024], trials, 0)?;
    print!("{}", format_summary(&summarize(&rows)));
    Ok(())
}
