//! Stochastic adversarial mixing with caller-supplied gradients.

use puzzlemix::mixer::{adversarial_mix, puzzle_mix, AdvConfig, MixConfig};
use puzzlemix::saliency::proxy_saliency;
use puzzlemix::synthetic::synthetic_pairs;
use puzzlemix::tensor_io::FloatTensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> puzzlemix::Result<()> {
    let (x0, x1) = synthetic_pairs(4, 1)?.remove(0);
    let (s0, s1) = (proxy_saliency(&x0), proxy_saliency(&x1));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut grad = || FloatTensor::new(vec![3, 32, 32], (0..3072).map(|_| rng.random_range(-1.0..1.0)).collect());
    let (g0, g1) = (grad()?, grad()?);

    let cfg = MixConfig { seed: 6, ..Default::default() };
    let clean = puzzle_mix(&x0, &x1, &s0, &s1, &cfg)?;
    for p in [0.0, 0.5, 1.0] {
        let adv = AdvConfig { p, seed: 7, ..Default::default() };
        let (r, trace) = adversarial_mix(&x0, &x1, &g0, &g1, &s0, &s1, &cfg, &adv)?;
        let diff = r.mixed.data().iter().zip(clean.mixed.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
        println!("p = {p}: perturbed {:?}, delta {:.3}, max change vs clean mix {:.4}", trace.perturbed, trace.delta, diff);
    }
    Ok(())
}
