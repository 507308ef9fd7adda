//! Mixes two synthetic images and writes the result with its metadata.
//!
//! The smoothness and prior weights are lowered from their defaults so that
//! saliency, rather than the prior, decides most regions.
//!
//! Usage: `cargo run --example mix_pair [out-dir]`

use puzzlemix::energy::EnergyParams;
use puzzlemix::mixer::{mix_labels, puzzle_mix, MixConfig};
use puzzlemix::saliency::proxy_saliency;
use puzzlemix::synthetic::synthetic_pairs;
use puzzlemix::tensor_io::save_image;

fn main() -> puzzlemix::Result<()> {
    let dir = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("puzzlemix-mix"));
    std::fs::create_dir_all(&dir).map_err(|e| puzzlemix::Error::Format(e.to_string()))?;

    let (x0, x1) = synthetic_pairs(2, 1)?.remove(0);
    let (s0, s1) = (proxy_saliency(&x0), proxy_saliency(&x1));
    let params = EnergyParams { beta: 0.12, gamma: 0.05, eta: 0.02, ..Default::default() };
    let cfg = MixConfig { seed: 3, lambda: Some(0.35), grid_choices: vec![4], params, ..Default::default() };
    let r = puzzle_mix(&x0, &x1, &s0, &s1, &cfg)?;

    save_image(&x0, dir.join("a.png"))?;
    save_image(&x1, dir.join("b.png"))?;
    save_image(&r.mixed, dir.join("mixed.png"))?;
    let meta = serde_json::to_string_pretty(&r.metadata(&cfg)).expect("metadata serializes");
    std::fs::write(dir.join("mixed.json"), meta).map_err(|e| puzzlemix::Error::Format(e.to_string()))?;

    println!("grid {}x{}, lambda {} -> effective {:.4}", r.grid.side(), r.grid.side(), r.lambda_sampled, r.lambda_effective);
    for row in r.mask.values().chunks(r.grid.side()) {
        println!("  {row:?}");
    }
    println!("plans: {:?}\n       {:?}", r.plan0.permutation(), r.plan1.permutation());
    println!("label for classes (3, 7): {:?}", mix_labels(&[0., 0., 0., 1., 0., 0., 0., 0.], &[0., 0., 0., 0., 0., 0., 0., 1.], r.lambda_effective)?);
    println!("wrote {}", dir.display());
    Ok(())
}
