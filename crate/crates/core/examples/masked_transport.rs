//! Masked transport on one 8×8-region instance versus the exact assignment and a random plan.

use puzzlemix::bench::instance_for;
use puzzlemix::transport::{exact_assignment, masked_transport, random_permutation, relative_error};

fn main() -> puzzlemix::Result<()> {
    let (inst, mut rng) = instance_for(3, 64, 0)?;
    let greedy = masked_transport(&inst.cost);
    let exact = exact_assignment(&inst.cost);
    let random = random_permutation(64, &mut rng);

    let (fa, fe, fr) = (greedy.objective(&inst.cost), exact.objective(&inst.cost), random.objective(&inst.cost));
    println!("masked transport: {fa:.6} after {} iterations", greedy.iterations);
    println!("exact:            {fe:.6}");
    println!("random:           {fr:.6}");
    println!("relative error:   {:.5}", relative_error(fa, fe, fr));

    let perm = greedy.permutation().expect("converged plan is a permutation");
    let moved = perm.iter().enumerate().filter(|(i, j)| i != *j).count();
    println!("{moved} of 64 regions move");
    Ok(())
}
