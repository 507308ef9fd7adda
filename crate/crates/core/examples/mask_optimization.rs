//! Alpha-beta swap on a random 3×3 mask problem, checked against exhaustive search.

use puzzlemix::energy::{brute_force_min, energy_terms, EnergyParams};
use puzzlemix::graphcut::{alpha_beta_swap, initial_mask, SwapOptions};
use puzzlemix::validate::random_energy_instance;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> puzzlemix::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let params = EnergyParams { lambda: 0.3, beta: 0.2, eta: 0.05, ..Default::default() };
    let inst = random_energy_instance(&mut rng, 3, params)?;

    let out = alpha_beta_swap(&inst, &initial_mask(&inst)?, SwapOptions::default())?;
    println!("energy {:.6} -> {:.6} in {} sweeps", out.initial_energy, out.energy, out.sweeps);
    println!("accepted moves: {:?}", out.accepted);
    for row in out.mask.values().chunks(3) {
        println!("  {row:?}");
    }
    println!("terms: {:?}", energy_terms(&out.mask, &inst)?);

    let (best, e) = brute_force_min(&inst)?;
    println!("global optimum {e:.6} (gap {:.2e}), same mask: {}", out.energy - e, best == out.mask);
    Ok(())
}
