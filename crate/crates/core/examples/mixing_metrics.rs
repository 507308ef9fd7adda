//! Mixed-saliency mass and total variation of the optimized mix and two baselines.

use puzzlemix::mixer::{compare_methods, Method, MixConfig};
use puzzlemix::saliency::proxy_saliency;
use puzzlemix::synthetic::synthetic_pairs;

fn main() -> puzzlemix::Result<()> {
    let pairs = synthetic_pairs(13, 30)?;
    println!("lambda   {}", Method::ALL.map(|m| format!("{:>9} mass {:>7} tv", m.name(), m.name())).join(" "));
    for l in 1..10 {
        let lambda = l as f64 / 10.0;
        let mut sums = [(0.0, 0.0); 3];
        for (i, (x0, x1)) in pairs.iter().enumerate() {
            let cfg = MixConfig { seed: i as u64, ..Default::default() };
            for (k, m) in compare_methods(x0, x1, &proxy_saliency(x0), &proxy_saliency(x1), lambda, &cfg)?.iter().enumerate() {
                sums[k].0 += m.metrics.mixed_saliency;
                sums[k].1 += m.metrics.total_variation;
            }
        }
        let k = pairs.len() as f64;
        println!("{lambda:>6.1}   {}", sums.map(|(m, t)| format!("{:>14.4} {:>10.4}", m / k, t / k)).join(" "));
    }
    Ok(())
}
