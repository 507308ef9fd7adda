//! Randomized property suites for the solvers.
//!
//! Every property draws its instances from its own ChaCha8 stream derived
//! from the suite seed, so a report is reproducible property by property.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bench::{generate_instance, trial_seed};
use crate::energy::{
    brute_force_min, phi_b_prime, phi_b_prime_defect, phi_multi, prior_log_pmf, psi, total_energy, EnergyInstance,
    EnergyParams, LabelSpace, Mask, PhiTable,
};
use crate::error::Result;
use crate::graphcut::{alpha_beta_swap, initial_mask, min_cut_binary, SwapOptions, SwapSubproblem};
use crate::saliency::{DownsampledSaliency, Grid};
use crate::transport::{
    brute_force_assignment, exact_assignment, iteration_bound, masked_transport_traced, CostKind, CostMatrix,
};

/// Slack allowed in floating-point inequality checks.
pub const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidateOptions {
    pub trials: usize,
    pub seed: u64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        let p = EnergyParams::default();
        Self {
            trials: 1000,
            seed: 0,
            beta: p.beta,
            gamma: p.gamma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyResult {
    pub name: &'static str,
    pub passed: bool,
    pub checks: usize,
    pub violations: usize,
    pub detail: String,
}

impl PropertyResult {
    fn new(name: &'static str, checks: usize, violations: usize, detail: String) -> Self {
        Self {
            name,
            passed: violations == 0,
            checks,
            violations,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub results: Vec<PropertyResult>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn get(&self, name: &str) -> Option<&PropertyResult> {
        self.results.iter().find(|r| r.name == name)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.results {
            writeln!(
                f,
                "{} {:<34} checks={:<8} violations={:<6} {}",
                if r.passed { "PASS" } else { "FAIL" },
                r.name,
                r.checks,
                r.violations,
                r.detail
            )?;
        }
        Ok(())
    }
}

fn stream(seed: u64, property: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(trial_seed(seed, property, 0))
}

fn random_phi<R: Rng + ?Sized>(rng: &mut R) -> PhiTable {
    [rng.random(), rng.random(), rng.random(), rng.random()]
}

fn random_saliency<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Result<DownsampledSaliency> {
    let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-6).collect();
    let total: f64 = v.iter().sum();
    DownsampledSaliency::new(v.into_iter().map(|x| x / total).collect())
}

/// Instance on a `g × g` grid with normalized uniform saliencies and
/// `φᵇ` entries uniform in `[0, 1)`.
pub fn random_energy_instance<R: Rng + ?Sized>(rng: &mut R, g: usize, params: EnergyParams) -> Result<EnergyInstance> {
    let grid = Grid::new(g)?;
    let n = grid.len();
    let s0 = random_saliency(rng, n)?;
    let s1 = random_saliency(rng, n)?;
    let phi = (0..grid.neighbors().len()).map(|_| random_phi(rng)).collect();
    EnergyInstance::new(grid, s0, s1, phi, params)
}

/// Largest `e(x,x) + e(y,y) − e(x,y) − e(y,x)` over all label pairs.
pub fn submodularity_excess(e: impl Fn(f64, f64) -> f64, labels: &[f64]) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for &x in labels {
        for &y in labels {
            worst = worst.max(e(x, x) + e(y, y) - e(x, y) - e(y, x));
        }
    }
    worst
}

/// Binary submodularity of `βψ + γφᵇ`. Guaranteed for `γ ≤ β` with `φᵇ` in
/// `[0, 1]`; otherwise the table `(1, 0, 0, 1)` is reported as a witness.
pub fn check_binary_submodularity(opts: &ValidateOptions) -> PropertyResult {
    const NAME: &str = "binary submodularity";
    let (beta, gamma) = (opts.beta, opts.gamma);
    let excess = |phi: &PhiTable| {
        let e = |x: usize, y: usize| beta * psi(x as f64, y as f64) + gamma * phi[2 * x + y];
        e(0, 0) + e(1, 1) - e(0, 1) - e(1, 0)
    };
    if gamma > beta {
        let witness = excess(&[1.0, 0.0, 0.0, 1.0]);
        return PropertyResult::new(
            NAME,
            1,
            usize::from(witness > TOLERANCE),
            format!(
                "not guaranteed: gamma {gamma} > beta {beta}; phi_b = (1, 0, 0, 1) violates the condition by {witness:.6}"
            ),
        );
    }
    let mut rng = stream(opts.seed, 1);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..opts.trials {
        let x = excess(&random_phi(&mut rng));
        worst = worst.max(x);
        violations += usize::from(x > TOLERANCE);
    }
    PropertyResult::new(NAME, opts.trials, violations, format!("max excess {worst:.3e}"))
}

/// Multi-label submodularity of `βψ + γ·φ_multi(φᵇ′)` for `m ∈ {1, 2, 3, 4}`.
pub fn check_multilabel_submodularity(opts: &ValidateOptions) -> PropertyResult {
    let mut rng = stream(opts.seed, 2);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    let spaces: Vec<Vec<f64>> = (1..=4).map(|m| LabelSpace::new(m).unwrap().labels()).collect();
    for t in 0..opts.trials {
        let p = phi_b_prime(random_phi(&mut rng));
        let labels = &spaces[if t % 2 == 0 { 1 } else { t % 4 }];
        let x = submodularity_excess(|a, b| opts.beta * psi(a, b) + opts.gamma * phi_multi(a, b, &p), labels);
        worst = worst.max(x);
        violations += usize::from(x > TOLERANCE);
    }
    PropertyResult::new(
        "multi-label submodularity",
        opts.trials,
        violations,
        format!("max excess {worst:.3e}"),
    )
}

fn random_submodular_table<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    let labels: Vec<f64> = (0..k).map(|v| v as f64).collect();
    loop {
        let t: Vec<f64> = (0..k * k).map(|_| rng.random::<f64>()).collect();
        if submodularity_excess(|a, b| t[a as usize * k + b as usize], &labels) <= 0.0 {
            return t;
        }
    }
}

/// Non-negative combinations of submodular tables stay submodular.
pub fn check_closure(opts: &ValidateOptions) -> PropertyResult {
    let mut rng = stream(opts.seed, 3);
    let mut violations = 0;
    for t in 0..opts.trials {
        let k = 2 + t % 2;
        let f = random_submodular_table(&mut rng, k);
        let g = random_submodular_table(&mut rng, k);
        let (a, b): (f64, f64) = (rng.random_range(0.0..2.0), rng.random_range(0.0..2.0));
        let labels: Vec<f64> = (0..k).map(|v| v as f64).collect();
        let x = submodularity_excess(
            |p, q| {
                let idx = p as usize * k + q as usize;
                a * f[idx] + b * g[idx]
            },
            &labels,
        );
        violations += usize::from(x > TOLERANCE);
    }
    PropertyResult::new("closure under combination", opts.trials, violations, String::new())
}

/// The symmetrized table has zero interaction, bit for bit, and the bilinear
/// extension reproduces it at the corners.
pub fn check_phi_prime_identity(opts: &ValidateOptions) -> PropertyResult {
    let mut rng = stream(opts.seed, 4);
    let mut violations = 0;
    for _ in 0..opts.trials {
        let p = phi_b_prime(random_phi(&mut rng));
        let corners = [
            phi_multi(0.0, 0.0, &p),
            phi_multi(0.0, 1.0, &p),
            phi_multi(1.0, 0.0, &p),
            phi_multi(1.0, 1.0, &p),
        ];
        let corner_err = corners.iter().zip(&p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        violations += usize::from(phi_b_prime_defect(&p) != 0.0 || corner_err > TOLERANCE);
    }
    PropertyResult::new("symmetrized table identity", opts.trials, violations, String::new())
}

/// The prior sums to one and has mean λ.
pub fn check_prior(opts: &ValidateOptions) -> PropertyResult {
    let mut rng = stream(opts.seed, 5);
    let mut violations = 0;
    let mut worst = 0.0f64;
    for _ in 0..opts.trials {
        let m = rng.random_range(1..=8);
        let lambda: f64 = rng.random_range(0.01..0.99);
        let labels = LabelSpace::new(m).unwrap().labels();
        let pmf: Vec<f64> = labels.iter().map(|&z| prior_log_pmf(z, lambda, m).unwrap().exp()).collect();
        let total: f64 = pmf.iter().sum();
        let mean: f64 = labels.iter().zip(&pmf).map(|(z, p)| z * p).sum();
        let err = (total - 1.0).abs().max((mean - lambda).abs());
        worst = worst.max(err);
        violations += usize::from(err > TOLERANCE);
    }
    PropertyResult::new("binomial prior", opts.trials, violations, format!("max error {worst:.3e}"))
}

/// Swap statistics on one instance: strict monotonicity, local optimality
/// under every label pair, and the gap to the global optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct SwapCheck {
    pub monotonicity_violations: usize,
    pub local_violations: usize,
    pub below_optimum: bool,
    pub gap: f64,
}

pub fn check_swap_instance(inst: &EnergyInstance) -> Result<SwapCheck> {
    let out = alpha_beta_swap(inst, &initial_mask(inst)?, SwapOptions::default())?;
    let mut prev = out.initial_energy;
    let mut monotonicity_violations = 0;
    for &e in &out.accepted {
        monotonicity_violations += usize::from(e >= prev);
        prev = e;
    }
    let recomputed = total_energy(&out.mask, inst)?;
    monotonicity_violations += usize::from((recomputed - out.energy).abs() > TOLERANCE);

    let levels = out.mask.levels();
    let k = inst.space().count();
    let mut local_violations = 0;
    for a in 0..k {
        for b in a + 1..k {
            let sub = SwapSubproblem::build(inst, levels, a, b);
            if sub.is_empty() {
                continue;
            }
            let cut = min_cut_binary(&sub)?;
            let mut moved = levels.to_vec();
            for (v, &r) in sub.active.iter().enumerate() {
                moved[r] = if cut.assignment[v] { b } else { a };
            }
            let e = total_energy(&Mask::from_levels(inst.grid(), inst.space(), moved)?, inst)?;
            local_violations += usize::from(e < out.energy - TOLERANCE);
        }
    }
    let (_, optimum) = brute_force_min(inst)?;
    Ok(SwapCheck {
        monotonicity_violations,
        local_violations,
        below_optimum: out.energy < optimum - TOLERANCE,
        gap: out.energy - optimum,
    })
}

fn random_params<R: Rng + ?Sized>(rng: &mut R, m: usize) -> EnergyParams {
    EnergyParams {
        beta: rng.random_range(0.0..2.0),
        gamma: rng.random_range(0.0..1.0),
        eta: rng.random_range(0.0..0.5),
        lambda: rng.random(),
        m,
        ..Default::default()
    }
}

/// α-β swap on random 3×3 instances with three labels.
pub fn check_swap(opts: &ValidateOptions) -> Result<PropertyResult> {
    let mut rng = stream(opts.seed, 6);
    let trials = (opts.trials / 10).max(1);
    let (mut violations, mut optimal, mut worst_gap) = (0, 0, 0.0f64);
    for _ in 0..trials {
        let params = random_params(&mut rng, 2);
        let inst = random_energy_instance(&mut rng, 3, params)?;
        let c = check_swap_instance(&inst)?;
        violations += c.monotonicity_violations + c.local_violations + usize::from(c.below_optimum);
        optimal += usize::from(c.gap <= TOLERANCE);
        worst_gap = worst_gap.max(c.gap);
    }
    Ok(PropertyResult::new(
        "swap monotone and locally optimal",
        trials,
        violations,
        format!("{optimal}/{trials} global optima, max gap {worst_gap:.3e}"),
    ))
}

/// Minimum of a two-label subproblem by enumeration.
pub fn enumerate_binary(sub: &SwapSubproblem) -> f64 {
    let k = sub.len();
    (0..1u64 << k)
        .map(|bits| {
            let x: Vec<bool> = (0..k).map(|v| bits >> v & 1 == 1).collect();
            sub.energy(&x)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Random two-label subproblem with between 1 and 16 active regions.
pub fn random_subproblem<R: Rng + ?Sized>(rng: &mut R) -> Result<SwapSubproblem> {
    loop {
        let params = random_params(rng, 2);
        let inst = random_energy_instance(rng, 4, params)?;
        let levels: Vec<usize> = (0..16).map(|_| rng.random_range(0..3)).collect();
        let a = rng.random_range(0..2);
        let b = rng.random_range(a + 1..3);
        let sub = SwapSubproblem::build(&inst, &levels, a, b);
        if !sub.is_empty() {
            return Ok(sub);
        }
    }
}

pub fn check_min_cut(opts: &ValidateOptions) -> Result<PropertyResult> {
    let mut rng = stream(opts.seed, 7);
    let trials = (opts.trials / 5).max(1);
    let mut violations = 0;
    for _ in 0..trials {
        let sub = random_subproblem(&mut rng)?;
        let cut = min_cut_binary(&sub)?;
        let best = enumerate_binary(&sub);
        violations += usize::from((cut.energy - best).abs() > TOLERANCE);
    }
    Ok(PropertyResult::new("min cut matches enumeration", trials, violations, String::new()))
}

/// Iteration bound, permutation output, coverage and monotonicity on
/// benchmark-style instances for `n ∈ {4, 16, 64}`.
pub fn check_masked_transport(opts: &ValidateOptions) -> Result<PropertyResult> {
    let mut violations = 0;
    let mut checks = 0;
    let mut max_ratio = 0.0f64;
    for n in [4usize, 16, 64] {
        let mut rng = stream(opts.seed, 100 + n);
        for _ in 0..opts.trials {
            let inst = generate_instance(n, &mut rng)?;
            let (plan, trace) = masked_transport_traced(&inst.cost, &inst.mask)?;
            checks += 1;
            max_ratio = max_ratio.max(plan.iterations as f64 / iteration_bound(n) as f64);
            let bad = !plan.converged
                || plan.iterations > iteration_bound(n)
                || !plan.is_permutation()
                || trace.coverage_violations > 0
                || trace.monotonicity_violations > 0;
            violations += usize::from(bad);
        }
    }
    Ok(PropertyResult::new(
        "masked transport guarantees",
        checks,
        violations,
        format!("max iterations / bound {max_ratio:.4}"),
    ))
}

pub fn random_cost<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Result<CostMatrix> {
    CostMatrix::new(n, (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect(), CostKind::Discounted)
}

/// Exact assignment agrees with factorial enumeration for `n ∈ 2..=8`, and
/// masked transport never beats it.
pub fn check_exact_assignment(opts: &ValidateOptions) -> Result<PropertyResult> {
    let mut rng = stream(opts.seed, 8);
    let per_n = (opts.trials / 10).max(1);
    let mut violations = 0;
    for n in 2..=8 {
        for _ in 0..per_n {
            let c = random_cost(&mut rng, n)?;
            let exact = exact_assignment(&c).objective(&c);
            let brute = brute_force_assignment(&c)?.objective(&c);
            let greedy = crate::transport::masked_transport(&c).objective(&c);
            violations += usize::from((exact - brute).abs() > TOLERANCE || greedy < exact - TOLERANCE);
        }
    }
    Ok(PropertyResult::new("exact assignment oracle", 7 * per_n, violations, String::new()))
}

pub fn run_validation(opts: &ValidateOptions) -> Result<ValidationReport> {
    Ok(ValidationReport {
        results: vec![
            check_binary_submodularity(opts),
            check_multilabel_submodularity(opts),
            check_closure(opts),
            check_phi_prime_identity(opts),
            check_prior(opts),
            check_swap(opts)?,
            check_min_cut(opts)?,
            check_masked_transport(opts)?,
            check_exact_assignment(opts)?,
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ValidateOptions {
        ValidateOptions {
            trials: 50,
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn default_suite_passes() {
        let r = run_validation(&small()).unwrap();
        assert!(r.all_passed(), "{r}");
        assert_eq!(r.results.len(), 9);
    }

    #[test]
    fn report_is_deterministic() {
        assert_eq!(run_validation(&small()).unwrap(), run_validation(&small()).unwrap());
    }

    #[test]
    fn gamma_above_beta_is_flagged() {
        let opts = ValidateOptions {
            beta: 0.3,
            gamma: 0.5,
            ..small()
        };
        let r = check_binary_submodularity(&opts);
        assert!(!r.passed);
        assert!(r.detail.contains("not guaranteed"));
        // the multi-label term is submodular for any non-negative weights
        assert!(check_multilabel_submodularity(&opts).passed);
    }

    #[test]
    fn witness_excess_is_twice_the_weight_gap() {
        let (beta, gamma) = (0.3, 0.5);
        let phi = [1.0, 0.0, 0.0, 1.0];
        let e = |x: usize, y: usize| beta * psi(x as f64, y as f64) + gamma * phi[2 * x + y];
        let excess = e(0, 0) + e(1, 1) - e(0, 1) - e(1, 0);
        assert!((excess - 2.0 * (gamma - beta)).abs() < 1e-12);
    }

    #[test]
    fn excess_of_known_tables() {
        let labels = [0.0, 0.5, 1.0];
        assert!(submodularity_excess(psi, &labels) <= 0.0);
        assert!(submodularity_excess(|a, b| -psi(a, b), &labels) > 0.0);
    }
}
