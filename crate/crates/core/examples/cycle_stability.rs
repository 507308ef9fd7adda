//! How much a second mask/transport cycle changes the mix.

use puzzlemix::mixer::{run_cycles, MixConfig};
use puzzlemix::saliency::proxy_saliency;
use puzzlemix::synthetic::synthetic_pairs;

fn main() -> puzzlemix::Result<()> {
    let pairs = synthetic_pairs(12, 20)?;
    let (mut mask, mut pixel, mut changed) = (0.0, 0.0, 0);
    for (i, (x0, x1)) in pairs.iter().enumerate() {
        let cfg = MixConfig { seed: i as u64, cycles: 2, ..Default::default() };
        let rep = run_cycles(x0, x1, &proxy_saliency(x0), &proxy_saliency(x1), &cfg)?;
        mask += rep.mask_change_fraction;
        pixel += rep.pixel_change_fraction;
        changed += usize::from(rep.image_changed());
    }
    let k = pairs.len() as f64;
    println!("mean mask change {:.4}%, mean pixel change {:.4}%, {changed}/{} images changed", 100.0 * mask / k, 100.0 * pixel / k, pairs.len());
    Ok(())
}
