//! Binary region transport.
//!
//! A plan moves region `i` of an input to position `j`. For a mask `z` the plan
//! for input `x₁` minimizes `⟨Π, C′⟩` with `C′ = ξC − s zᵀ`: geometric cost
//! discounted by the saliency carried into revealed positions. The plan for
//! `x₀` uses `1 − z`.
//!
//! [`masked_transport`] is the greedy solver used in the mixer;
//! [`exact_assignment`] and [`brute_force_assignment`] are exact references.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::saliency::Grid;
use crate::tensor_io::ImageTensor;

pub const BRUTE_FORCE_MAX_N: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CostKind {
    /// `ξC`: scaled distances between region centres.
    Base,
    /// `ξC − s zᵀ`.
    Discounted,
}

/// Dense `n × n` cost matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    n: usize,
    data: Vec<f64>,
    kind: CostKind,
}

impl CostMatrix {
    pub fn new(n: usize, data: Vec<f64>, kind: CostKind) -> Result<Self> {
        if n == 0 || data.len() != n * n {
            return Err(Error::Shape(format!("cost matrix needs {n}x{n} entries, got {}", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("cost matrix has non-finite entries".into()));
        }
        Ok(Self { n, data, kind })
    }

    pub fn from_rows(rows: &[Vec<f64>], kind: CostKind) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Shape("cost matrix rows must all have length n".into()));
        }
        Self::new(n, rows.concat(), kind)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> CostKind {
        self.kind
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn min(&self) -> f64 {
        self.data.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `ξ` times the Euclidean distance between region centres, normalized so the
/// grid diagonal has length one.
pub fn build_cost_matrix(grid: &Grid, xi: f64) -> CostMatrix {
    let g = grid.side();
    let n = grid.len();
    let diag = (g.saturating_sub(1)) as f64 * std::f64::consts::SQRT_2;
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        let (ri, ci) = grid.coords(i);
        for j in 0..n {
            if i == j {
                continue;
            }
            let (rj, cj) = grid.coords(j);
            let d = ((ri as f64 - rj as f64).powi(2) + (ci as f64 - cj as f64).powi(2)).sqrt();
            data[i * n + j] = xi * d / diag;
        }
    }
    CostMatrix {
        n,
        data,
        kind: CostKind::Base,
    }
}

/// `C′ᵢⱼ = baseᵢⱼ − sᵢ·zⱼ`, where `base` already carries the `ξ` factor.
pub fn discounted_cost(base: &CostMatrix, s: &[f64], z: &[f64]) -> Result<CostMatrix> {
    let n = base.n;
    if s.len() != n || z.len() != n {
        return Err(Error::Shape(format!(
            "saliency ({}) and mask ({}) must match cost size {n}",
            s.len(),
            z.len()
        )));
    }
    let mut data = base.data.clone();
    for i in 0..n {
        for j in 0..n {
            data[i * n + j] -= s[i] * z[j];
        }
    }
    CostMatrix::new(n, data, CostKind::Discounted)
}

/// Binary plan: `targets[i] = Some(j)` means region `i` moves to position `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransportPlan {
    targets: Vec<Option<usize>>,
    pub converged: bool,
    pub iterations: usize,
}

impl TransportPlan {
    pub fn identity(n: usize) -> Self {
        Self::from_permutation((0..n).collect())
    }

    /// Panics if `perm` is not a permutation of `0..perm.len()`.
    pub fn from_permutation(perm: Vec<usize>) -> Self {
        let mut seen = vec![false; perm.len()];
        for &j in &perm {
            assert!(j < perm.len() && !seen[j], "not a permutation: {perm:?}");
            seen[j] = true;
        }
        Self {
            targets: perm.into_iter().map(Some).collect(),
            converged: true,
            iterations: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.targets.len()
    }

    pub fn targets(&self) -> &[Option<usize>] {
        &self.targets
    }

    /// Row → column map; `None` unless the plan is a permutation.
    pub fn permutation(&self) -> Option<Vec<usize>> {
        if !self.is_permutation() {
            return None;
        }
        Some(self.targets.iter().map(|t| t.unwrap()).collect())
    }

    /// Every row and every column holds exactly one 1.
    pub fn is_permutation(&self) -> bool {
        let mut seen = vec![false; self.n()];
        for t in &self.targets {
            match t {
                Some(j) if !seen[*j] => seen[*j] = true,
                _ => return false,
            }
        }
        true
    }

    pub fn is_identity(&self) -> bool {
        self.targets.iter().enumerate().all(|(i, t)| *t == Some(i))
    }

    pub fn dense(&self) -> Vec<Vec<u8>> {
        let n = self.n();
        let mut m = vec![vec![0u8; n]; n];
        for (i, t) in self.targets.iter().enumerate() {
            if let Some(j) = t {
                m[i][*j] = 1;
            }
        }
        m
    }

    /// `Πᵀ` as a plan (the inverse permutation).
    pub fn transpose(&self) -> Result<Self> {
        let perm = self.permutation().ok_or(Error::NotConverged)?;
        let mut inv = vec![0; perm.len()];
        for (i, &j) in perm.iter().enumerate() {
            inv[j] = i;
        }
        Ok(Self::from_permutation(inv))
    }

    /// `⟨Π, C⟩`.
    pub fn objective(&self, cost: &CostMatrix) -> f64 {
        self.targets
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.map(|j| cost.get(i, j)))
            .sum()
    }

    /// `Πᵀ v`: the value of region `i` lands at its target position.
    pub fn transport_vector(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n() {
            return Err(Error::Shape(format!("vector length {} vs plan size {}", v.len(), self.n())));
        }
        let mut out = vec![0.0; v.len()];
        for (i, t) in self.targets.iter().enumerate() {
            if let Some(j) = t {
                out[*j] += v[i];
            }
        }
        Ok(out)
    }
}

/// Penalty `(max C′ − min C′) + 1`.
pub fn default_penalty(cost: &CostMatrix) -> f64 {
    (cost.max() - cost.min()) + 1.0
}

/// `n(n − 1)/2 + 1`, the iteration bound of the masked transport solver.
pub fn iteration_bound(n: usize) -> usize {
    n * (n - 1) / 2 + 1
}

/// Per-iteration checks recorded when a binary mask is supplied to
/// [`masked_transport_traced`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TransportTrace {
    /// Iterations in which some column `j` with `zⱼ = 1` did not hold exactly
    /// one winner.
    pub coverage_violations: usize,
    /// Iterations in which `⟨Π_win, C′ z⟩` rose above its previous value.
    pub monotonicity_violations: usize,
    /// `⟨Π_win, C′ z⟩` after every iteration.
    pub partial_objectives: Vec<f64>,
}

/// Greedy masked transport with the default penalty.
pub fn masked_transport(cost: &CostMatrix) -> TransportPlan {
    masked_transport_with_penalty(cost, default_penalty(cost))
}

pub fn masked_transport_with_penalty(cost: &CostMatrix, penalty: f64) -> TransportPlan {
    run_masked_transport(cost, penalty, None).0
}

/// Like [`masked_transport`], additionally checking column coverage and
/// partial-objective monotonicity at every iteration when `mask` is binary.
pub fn masked_transport_traced(cost: &CostMatrix, mask: &[f64]) -> Result<(TransportPlan, TransportTrace)> {
    if mask.len() != cost.n() {
        return Err(Error::Shape(format!("mask length {} vs cost size {}", mask.len(), cost.n())));
    }
    let binary = mask.iter().all(|&z| z == 0.0 || z == 1.0);
    let (plan, trace) = run_masked_transport(cost, default_penalty(cost), binary.then_some(mask));
    Ok((plan, trace))
}

#[inline]
fn row_argmin(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v < row[best] {
            best = j;
        }
    }
    best
}

/// Each round every row claims its cheapest column; a contested column keeps
/// the claimant with the lowest current cost and every losing claim has
/// `penalty` added to its cost. Stops once no claim loses.
///
/// Only losing rows change between rounds, so only their argmins are
/// recomputed. Column winners follow the argmin over
/// `C ⊙ Π + penalty·(1 − Π)`, lowest index first, so an unclaimed row with a
/// smaller index beats a claimant whose cost is not below `penalty`.
fn run_masked_transport(
    cost: &CostMatrix,
    penalty: f64,
    mask: Option<&[f64]>,
) -> (TransportPlan, TransportTrace) {
    let n = cost.n();
    let bound = iteration_bound(n);
    let cap = 4 * bound + 16;
    let mut work = cost.data.clone();
    let mut target: Vec<usize> = (0..n).map(|i| row_argmin(&work[i * n..(i + 1) * n])).collect();

    const NONE: usize = usize::MAX;
    let mut head = vec![NONE; n];
    let mut next = vec![NONE; n];
    let mut claimed = vec![false; n];
    let mut winner = vec![NONE; n];
    let mut losers = Vec::with_capacity(n);
    let mut trace = TransportTrace::default();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cap {
        iterations += 1;
        head.iter_mut().for_each(|h| *h = NONE);
        // walk rows high to low so each column list comes out in ascending row order
        for i in (0..n).rev() {
            let j = target[i];
            next[i] = head[j];
            head[j] = i;
        }
        losers.clear();
        for j in 0..n {
            winner[j] = NONE;
            if head[j] == NONE {
                continue;
            }
            let (mut best_row, mut best_cost, mut count) = (NONE, f64::INFINITY, 0usize);
            let mut i = head[j];
            while i != NONE {
                claimed[i] = true;
                count += 1;
                let c = work[i * n + j];
                if c < best_cost {
                    best_cost = c;
                    best_row = i;
                }
                i = next[i];
            }
            let win = if count == n || best_cost < penalty {
                true
            } else if best_cost > penalty {
                false
            } else {
                let first_unclaimed = (0..n).find(|&r| !claimed[r]).unwrap_or(n);
                best_row < first_unclaimed
            };
            let mut i = head[j];
            while i != NONE {
                claimed[i] = false;
                if win && i == best_row {
                    winner[j] = i;
                } else {
                    losers.push(i);
                }
                i = next[i];
            }
        }

        if let Some(z) = mask {
            let mut partial = 0.0;
            let mut covered = true;
            for j in 0..n {
                if z[j] == 1.0 {
                    if winner[j] == NONE {
                        covered = false;
                    } else {
                        partial += cost.get(winner[j], j);
                    }
                }
            }
            if !covered {
                trace.coverage_violations += 1;
            }
            if let Some(&prev) = trace.partial_objectives.last() {
                if partial > prev + 1e-12 * (1.0 + prev.abs()) {
                    trace.monotonicity_violations += 1;
                }
            }
            trace.partial_objectives.push(partial);
        }

        if losers.is_empty() {
            converged = true;
            break;
        }
        for &i in &losers {
            work[i * n + target[i]] += penalty;
            target[i] = row_argmin(&work[i * n..(i + 1) * n]);
        }
    }

    debug_assert!(!converged || iterations <= bound, "masked transport took {iterations} > {bound} rounds");
    let targets = (0..n)
        .map(|i| if converged || winner[target[i]] == i { Some(target[i]) } else { None })
        .collect();
    (
        TransportPlan {
            targets,
            converged,
            iterations,
        },
        trace,
    )
}

/// Exact minimum-cost permutation (shortest augmenting paths with potentials,
/// `O(n³)`).
pub fn exact_assignment(cost: &CostMatrix) -> TransportPlan {
    let n = cost.n();
    let c = &cost.data;
    // 1-based potentials; column 0 is the virtual start
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|b| *b = false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let row = &c[(i0 - 1) * n..i0 * n];
            let ui0 = u[i0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = row[j - 1] - ui0 - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[owner[j] - 1] = j - 1;
    }
    TransportPlan::from_permutation(perm)
}

fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).unwrap();
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Minimum over all `n!` permutations; ties go to the lexicographically
/// smallest permutation.
pub fn brute_force_assignment(cost: &CostMatrix) -> Result<TransportPlan> {
    let n = cost.n();
    if n > BRUTE_FORCE_MAX_N {
        return Err(Error::TooLarge(format!("{n}! permutations (limit n = {BRUTE_FORCE_MAX_N})")));
    }
    let eval = |p: &[usize]| -> f64 { p.iter().enumerate().map(|(i, &j)| cost.get(i, j)).sum() };
    let mut p: Vec<usize> = (0..n).collect();
    let mut best = (p.clone(), eval(&p));
    while next_permutation(&mut p) {
        let f = eval(&p);
        if f < best.1 {
            best = (p.clone(), f);
        }
    }
    Ok(TransportPlan::from_permutation(best.0))
}

pub fn random_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> TransportPlan {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    TransportPlan::from_permutation(p)
}

/// `e_a / (e_a + e_r)` with `e_a = f_alg − f_exact` and `e_r = f_random − f_exact`;
/// zero when both gaps vanish. Gaps below `1e-12` in magnitude count as zero.
pub fn relative_error(f_alg: f64, f_exact: f64, f_random: f64) -> f64 {
    let clean = |x: f64| if x.abs() < 1e-12 { 0.0 } else { x };
    let ea = clean(f_alg - f_exact);
    let er = clean(f_random - f_exact);
    if ea + er == 0.0 {
        0.0
    } else {
        ea / (ea + er)
    }
}

/// Moves pixel blocks: output region `j` is input region `i` where `Πᵢⱼ = 1`.
pub fn apply_plan(plan: &TransportPlan, image: &ImageTensor, grid: &Grid) -> Result<ImageTensor> {
    let perm = plan.permutation().ok_or(Error::NotConverged)?;
    if perm.len() != grid.len() {
        return Err(Error::Shape(format!("plan of size {} on {} regions", perm.len(), grid.len())));
    }
    grid.check_image(image)?;
    if plan.is_identity() {
        return Ok(image.clone());
    }
    let (rh, rw) = (grid.region_h(), grid.region_w());
    let mut out = image.data().to_vec();
    for (src, &dst) in perm.iter().enumerate() {
        let (sy, sx) = grid.origin(src);
        let (dy, dx) = grid.origin(dst);
        for c in 0..image.channels() {
            for y in 0..rh {
                let from = image.index(c, sy + y, sx);
                let to = image.index(c, dy + y, dx);
                out[to..to + rw].copy_from_slice(&image.data()[from..from + rw]);
            }
        }
    }
    ImageTensor::new(image.channels(), image.height(), image.width(), out)
}
