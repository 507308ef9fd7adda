//! Timing and quality benchmark of the masked transport solver against the
//! exact assignment solver and a random permutation.
//!
//! Instances: `n` must be a perfect square `g²`; `C` is the region-distance
//! matrix of a `g × g` grid (ξ = 1), `s ~ U[0, 1)ⁿ` and `z ~ Bernoulli(½)ⁿ`,
//! giving `C′ = C − s zᵀ`. Every `(seed, n, trial)` has its own ChaCha8 stream.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::saliency::Grid;
use crate::transport::{
    build_cost_matrix, discounted_cost, exact_assignment, masked_transport, random_permutation, relative_error,
    CostMatrix,
};

pub const CSV_HEADER: &str = "n,trial,time_alg1_ns,time_exact_ns,f_alg1,f_exact,f_random,rel_error";

#[derive(Debug, Clone, PartialEq)]
pub struct BenchInstance {
    pub cost: CostMatrix,
    pub saliency: Vec<f64>,
    pub mask: Vec<f64>,
}

fn grid_side(n: usize) -> Result<usize> {
    let g = (n as f64).sqrt().round() as usize;
    if n == 0 || g * g != n {
        return Err(Error::Config(format!("benchmark size {n} is not a positive perfect square")));
    }
    Ok(g)
}

pub fn generate_instance<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<BenchInstance> {
    let grid = Grid::new(grid_side(n)?)?;
    let saliency: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let mask: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect();
    let cost = discounted_cost(&build_cost_matrix(&grid, 1.0), &saliency, &mask)?;
    Ok(BenchInstance { cost, saliency, mask })
}

/// SplitMix64 finalizer over the three coordinates.
pub fn trial_seed(seed: u64, n: usize, trial: usize) -> u64 {
    let mut x = seed;
    for v in [n as u64, trial as u64] {
        x = x.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(v);
        x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        x ^= x >> 31;
    }
    x
}

pub fn instance_for(seed: u64, n: usize, trial: usize) -> Result<(BenchInstance, ChaCha8Rng)> {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, n, trial));
    let inst = generate_instance(n, &mut rng)?;
    Ok((inst, rng))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub trial: usize,
    pub time_alg1_ns: u128,
    pub time_exact_ns: u128,
    pub f_alg1: f64,
    pub f_exact: f64,
    pub f_random: f64,
    pub rel_error: f64,
}

pub fn run_trial(seed: u64, n: usize, trial: usize) -> Result<BenchRow> {
    let (inst, mut rng) = instance_for(seed, n, trial)?;
    let start = Instant::now();
    let alg1 = masked_transport(&inst.cost);
    let time_alg1_ns = start.elapsed().as_nanos();
    if !alg1.converged {
        return Err(Error::NotConverged);
    }
    let start = Instant::now();
    let exact = exact_assignment(&inst.cost);
    let time_exact_ns = start.elapsed().as_nanos();
    let random = random_permutation(n, &mut rng);

    let f_alg1 = alg1.objective(&inst.cost);
    let f_exact = exact.objective(&inst.cost);
    let f_random = random.objective(&inst.cost);
    Ok(BenchRow {
        n,
        trial,
        time_alg1_ns,
        time_exact_ns,
        f_alg1,
        f_exact,
        f_random,
        rel_error: relative_error(f_alg1, f_exact, f_random),
    })
}

/// Rows ordered by the order of `sizes`, then by trial.
pub fn run_benchmark(sizes: &[usize], trials: usize, seed: u64) -> Result<Vec<BenchRow>> {
    for &n in sizes {
        grid_side(n)?;
    }
    let mut rows = Vec::with_capacity(sizes.len() * trials);
    for &n in sizes {
        for trial in 0..trials {
            rows.push(run_trial(seed, n, trial)?);
        }
    }
    Ok(rows)
}

/// Writes the CSV; with `timings = false` both time columns are written as 0
/// so that the file is a pure function of the seed.
pub fn write_csv<W: Write>(rows: &[BenchRow], timings: bool, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        let (ta, te) = if timings { (r.time_alg1_ns, r.time_exact_ns) } else { (0, 0) };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.n, r.trial, ta, te, r.f_alg1, r.f_exact, r.f_random, r.rel_error
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchSummary {
    pub n: usize,
    pub trials: usize,
    pub mean_time_alg1_ns: f64,
    pub mean_time_exact_ns: f64,
    /// Exact time over masked-transport time.
    pub speedup: f64,
    pub mean_rel_error: f64,
    pub max_rel_error: f64,
}

pub fn summarize(rows: &[BenchRow]) -> Vec<BenchSummary> {
    let mut sizes: Vec<usize> = Vec::new();
    for r in rows {
        if !sizes.contains(&r.n) {
            sizes.push(r.n);
        }
    }
    sizes
        .into_iter()
        .map(|n| {
            let group: Vec<&BenchRow> = rows.iter().filter(|r| r.n == n).collect();
            let k = group.len() as f64;
            let ta = group.iter().map(|r| r.time_alg1_ns as f64).sum::<f64>() / k;
            let te = group.iter().map(|r| r.time_exact_ns as f64).sum::<f64>() / k;
            BenchSummary {
                n,
                trials: group.len(),
                mean_time_alg1_ns: ta,
                mean_time_exact_ns: te,
                speedup: if ta > 0.0 { te / ta } else { f64::NAN },
                mean_rel_error: group.iter().map(|r| r.rel_error).sum::<f64>() / k,
                max_rel_error: group.iter().map(|r| r.rel_error).fold(0.0, f64::max),
            }
        })
        .collect()
}

pub fn format_summary(summary: &[BenchSummary]) -> String {
    let mut s = format!(
        "{:>6} {:>7} {:>14} {:>14} {:>9} {:>12} {:>12}\n",
        "n", "trials", "alg1 mean ms", "exact mean ms", "speedup", "rel err mean", "rel err max"
    );
    for b in summary {
        s.push_str(&format!(
            "{:>6} {:>7} {:>14.4} {:>14.4} {:>9.2} {:>12.6} {:>12.6}\n",
            b.n,
            b.trials,
            b.mean_time_alg1_ns / 1e6,
            b.mean_time_exact_ns / 1e6,
            b.speedup,
            b.mean_rel_error,
            b.max_rel_error
        ));
    }
    s
}
