//! The mask objective.
//!
//! For a mask `z ∈ Lⁿ` over the label space `L = {t/m}` the energy is
//!
//! ```text
//! E(z) = Σᵢ uᵢ(zᵢ) + β Σ_N ψ(zᵢ, zⱼ) + γ Σ_N φᵢⱼ(zᵢ, zⱼ) − η Σᵢ log p(zᵢ)
//! uᵢ(zᵢ) = zᵢ·s0ᵢ + (1 − zᵢ)·s1ᵢ
//! ```
//!
//! where `s0`, `s1` are the (transported) region saliencies, `N` is the set
//! of 4-connected region pairs, ψ is the squared label difference, φ is the
//! bilinear extension of the symmetrized boundary distance table, and `p` is
//! the scaled binomial prior with mean λ.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::saliency::{DownsampledSaliency, Grid};
use crate::tensor_io::ImageTensor;

/// Prior weights are clamped into `[LAMBDA_CLAMP, 1 − LAMBDA_CLAMP]` so that no
/// label gets an infinite cost.
pub const LAMBDA_CLAMP: f64 = 1e-4;

/// Upper bound on `(m + 1)ⁿ` for [`brute_force_min`].
pub const BRUTE_FORCE_LIMIT: usize = 1_000_000;

/// `{t/m | t = 0..=m}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpace {
    m: usize,
}

impl LabelSpace {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Config("label space needs m >= 1".into()));
        }
        Ok(Self { m })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn count(&self) -> usize {
        self.m + 1
    }

    #[inline]
    pub fn value(&self, level: usize) -> f64 {
        level as f64 / self.m as f64
    }

    pub fn labels(&self) -> Vec<f64> {
        (0..=self.m).map(|t| self.value(t)).collect()
    }

    /// Level nearest to `lambda` (`round(λ·m)`).
    pub fn nearest(&self, lambda: f64) -> usize {
        ((lambda.clamp(0.0, 1.0) * self.m as f64).round() as usize).min(self.m)
    }

    /// Level index of an exact label value.
    pub fn level_of(&self, z: f64) -> Result<usize> {
        let scaled = z * self.m as f64;
        let t = scaled.round();
        if (scaled - t).abs() > 1e-9 || t < 0.0 || t > self.m as f64 {
            return Err(Error::Domain(format!("{z} is not a label of t/{}", self.m)));
        }
        Ok(t as usize)
    }
}

/// A region mask; each entry is a level `t`, standing for the label `t/m`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    levels: Vec<usize>,
    m: usize,
    side: usize,
}

impl Mask {
    pub fn from_levels(grid: &Grid, space: LabelSpace, levels: Vec<usize>) -> Result<Self> {
        if levels.len() != grid.len() {
            return Err(Error::Shape(format!(
                "mask has {} entries, grid has {} regions",
                levels.len(),
                grid.len()
            )));
        }
        if let Some(&bad) = levels.iter().find(|&&t| t > space.m()) {
            return Err(Error::Domain(format!("mask level {bad} exceeds m = {}", space.m())));
        }
        Ok(Self {
            levels,
            m: space.m(),
            side: grid.side(),
        })
    }

    pub fn from_values(grid: &Grid, space: LabelSpace, values: &[f64]) -> Result<Self> {
        let levels = values.iter().map(|&z| space.level_of(z)).collect::<Result<_>>()?;
        Self::from_levels(grid, space, levels)
    }

    pub fn constant(grid: &Grid, space: LabelSpace, level: usize) -> Result<Self> {
        Self::from_levels(grid, space, vec![level; grid.len()])
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn space(&self) -> LabelSpace {
        LabelSpace { m: self.m }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    #[inline]
    pub fn value(&self, region: usize) -> f64 {
        self.levels[region] as f64 / self.m as f64
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.levels.len()).map(|i| self.value(i)).collect()
    }

    /// `1 − z`, the mask seen from the other input.
    pub fn complement(&self) -> Self {
        Self {
            levels: self.levels.iter().map(|&t| self.m - t).collect(),
            m: self.m,
            side: self.side,
        }
    }

    /// Mean label value (the effective mixing ratio).
    pub fn mean(&self) -> f64 {
        let total: usize = self.levels.iter().sum();
        total as f64 / (self.m * self.levels.len()) as f64
    }

    pub fn is_binary(&self) -> bool {
        self.levels.iter().all(|&t| t == 0 || t == self.m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    /// Label smoothness coefficient.
    pub beta: f64,
    /// Data smoothness coefficient.
    pub gamma: f64,
    /// Prior coefficient.
    pub eta: f64,
    /// Transport cost coefficient.
    pub xi: f64,
    /// Mixing weight the prior is centred on.
    pub lambda: f64,
    /// Label levels.
    pub m: usize,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            beta: 1.2,
            gamma: 0.5,
            eta: 0.2,
            xi: 0.8,
            lambda: 0.5,
            m: 2,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("beta", self.beta), ("gamma", self.gamma), ("eta", self.eta), ("xi", self.xi)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        LabelSpace::new(self.m)?;
        Ok(())
    }

    pub fn labels(&self) -> Result<LabelSpace> {
        LabelSpace::new(self.m)
    }
}

/// Binary boundary-distance table in the order `[(0,0), (0,1), (1,0), (1,1)]`;
/// entry `(a, b)` compares region `i` of input `a` with region `j` of input `b`.
pub type PhiTable = [f64; 4];

pub const PSI_00: usize = 0;
pub const PSI_01: usize = 1;
pub const PSI_10: usize = 2;
pub const PSI_11: usize = 3;

/// Label smoothness `(zᵢ − zⱼ)²`.
#[inline]
pub fn psi(zi: f64, zj: f64) -> f64 {
    let d = zi - zj;
    d * d
}

/// Symmetrizes a binary table so that `φ′(1,0) + φ′(0,1) − φ′(0,0) − φ′(1,1) = 0`.
///
/// The `(1,1)` entry is taken as `(φ′(1,0) + φ′(0,1)) − φ′(0,0)`, which equals
/// `φᵇ(1,1) + (φᵇ(0,1) + φᵇ(1,0))/2` up to rounding and makes the identity hold
/// bit-exactly when evaluated left to right.
pub fn phi_b_prime(phi_b: PhiTable) -> PhiTable {
    let [a, b, c, d] = phi_b;
    let p00 = a + (b + c) / 2.0;
    let p01 = b + (a + d) / 2.0;
    let p10 = c + (a + d) / 2.0;
    let p11 = (p10 + p01) - p00;
    [p00, p01, p10, p11]
}

/// `φ′(1,0) + φ′(0,1) − φ′(0,0) − φ′(1,1)`, evaluated left to right.
pub fn phi_b_prime_defect(p: &PhiTable) -> f64 {
    p[PSI_10] + p[PSI_01] - p[PSI_00] - p[PSI_11]
}

/// Bilinear extension of a symmetrized table to multi-label masks.
#[inline]
pub fn phi_multi(zi: f64, zj: f64, p: &PhiTable) -> f64 {
    zi * zj * p[PSI_11]
        + zi * (1.0 - zj) * p[PSI_10]
        + (1.0 - zi) * zj * p[PSI_01]
        + (1.0 - zi) * (1.0 - zj) * p[PSI_00]
}

fn ln_binomial(m: usize, t: usize) -> f64 {
    let t = t.min(m - t);
    (0..t).map(|k| ((m - k) as f64 / (k + 1) as f64).ln()).sum()
}

/// `log p(z = t/m)` for `t ~ Binomial(m, λ)`, with λ clamped away from 0 and 1.
pub fn prior_log_pmf(z: f64, lambda: f64, m: usize) -> Result<f64> {
    let space = LabelSpace::new(m)?;
    let t = space.level_of(z)?;
    Ok(prior_log_pmf_level(t, lambda, m))
}

pub(crate) fn prior_log_pmf_level(t: usize, lambda: f64, m: usize) -> f64 {
    let lam = lambda.clamp(LAMBDA_CLAMP, 1.0 - LAMBDA_CLAMP);
    ln_binomial(m, t) + t as f64 * lam.ln() + (m - t) as f64 * (1.0 - lam).ln()
}

/// Mean absolute difference across the shared edge of regions `i` and `j`,
/// taking region `i` from `a` and region `j` from `b`.
pub fn dp_boundary(a: &ImageTensor, b: &ImageTensor, grid: &Grid, i: usize, j: usize) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::Shape("boundary distance needs equally shaped images".into()));
    }
    grid.check_image(a)?;
    let n = grid.len();
    for r in [i, j] {
        if r >= n {
            return Err(Error::Index { index: r, len: n });
        }
    }
    let ((ri, ci), (rj, cj)) = (grid.coords(i), grid.coords(j));
    let (rh, rw) = (grid.region_h(), grid.region_w());
    let (oi, oj) = (grid.origin(i), grid.origin(j));
    let mut total = 0.0f64;
    let count;
    if ri == rj && ci.abs_diff(cj) == 1 {
        // side by side: compare the touching columns
        let (xi, xj) = if cj > ci {
            (oi.1 + rw - 1, oj.1)
        } else {
            (oi.1, oj.1 + rw - 1)
        };
        for c in 0..a.channels() {
            for dy in 0..rh {
                total += (a.get(c, oi.0 + dy, xi) as f64 - b.get(c, oj.0 + dy, xj) as f64).abs();
            }
        }
        count = a.channels() * rh;
    } else if ci == cj && ri.abs_diff(rj) == 1 {
        let (yi, yj) = if rj > ri {
            (oi.0 + rh - 1, oj.0)
        } else {
            (oi.0, oj.0 + rh - 1)
        };
        for c in 0..a.channels() {
            for dx in 0..rw {
                total += (a.get(c, yi, oi.1 + dx) as f64 - b.get(c, yj, oj.1 + dx) as f64).abs();
            }
        }
        count = a.channels() * rw;
    } else {
        return Err(Error::NotAdjacent(i, j));
    }
    Ok(total / count as f64)
}

/// Everything needed to evaluate the mask energy for one image pair.
#[derive(Debug, Clone)]
pub struct EnergyInstance {
    grid: Grid,
    s0t: DownsampledSaliency,
    s1t: DownsampledSaliency,
    neighbors: Vec<(usize, usize)>,
    phi_b: Vec<PhiTable>,
    phi_bp: Vec<PhiTable>,
    params: EnergyParams,
    space: LabelSpace,
    label_values: Vec<f64>,
    prior_costs: Vec<f64>,
}

impl EnergyInstance {
    /// `phi_b[k]` is the binary table of `grid.neighbors()[k]`.
    pub fn new(
        grid: Grid,
        s0t: DownsampledSaliency,
        s1t: DownsampledSaliency,
        phi_b: Vec<PhiTable>,
        params: EnergyParams,
    ) -> Result<Self> {
        params.validate()?;
        let n = grid.len();
        if s0t.len() != n || s1t.len() != n {
            return Err(Error::Shape(format!(
                "saliency lengths {} / {} do not match {n} regions",
                s0t.len(),
                s1t.len()
            )));
        }
        let neighbors = grid.neighbors();
        if phi_b.len() != neighbors.len() {
            return Err(Error::Shape(format!(
                "{} boundary tables for {} neighbor pairs",
                phi_b.len(),
                neighbors.len()
            )));
        }
        if phi_b.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain("boundary distances must lie in [0, 1]".into()));
        }
        let space = params.labels()?;
        let label_values = space.labels();
        let prior_costs = (0..space.count())
            .map(|t| -params.eta * prior_log_pmf_level(t, params.lambda, space.m()))
            .collect();
        let phi_bp = phi_b.iter().map(|&t| phi_b_prime(t)).collect();
        Ok(Self {
            grid,
            s0t,
            s1t,
            neighbors,
            phi_b,
            phi_bp,
            params,
            space,
            label_values,
            prior_costs,
        })
    }

    /// Builds the boundary tables from the two (transported) images.
    pub fn from_images(
        x0: &ImageTensor,
        x1: &ImageTensor,
        grid: Grid,
        s0t: DownsampledSaliency,
        s1t: DownsampledSaliency,
        params: EnergyParams,
    ) -> Result<Self> {
        let inputs = [x0, x1];
        let phi_b = grid
            .neighbors()
            .into_iter()
            .map(|(i, j)| {
                let mut table = [0.0; 4];
                for a in 0..2 {
                    for b in 0..2 {
                        table[2 * a + b] = dp_boundary(inputs[a], inputs[b], &grid, i, j)?;
                    }
                }
                Ok(table)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, s0t, s1t, phi_b, params)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn params(&self) -> &EnergyParams {
        &self.params
    }

    pub fn space(&self) -> LabelSpace {
        self.space
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn neighbors(&self) -> &[(usize, usize)] {
        &self.neighbors
    }

    pub fn phi_b(&self) -> &[PhiTable] {
        &self.phi_b
    }

    pub fn phi_b_prime(&self) -> &[PhiTable] {
        &self.phi_bp
    }

    pub fn s0t(&self) -> &DownsampledSaliency {
        &self.s0t
    }

    pub fn s1t(&self) -> &DownsampledSaliency {
        &self.s1t
    }

    /// `zᵢ·s0ᵢ + (1 − zᵢ)·s1ᵢ`.
    pub fn unary(&self, i: usize, z: f64) -> Result<f64> {
        let n = self.len();
        if i >= n {
            return Err(Error::Index { index: i, len: n });
        }
        Ok(z * self.s0t.values()[i] + (1.0 - z) * self.s1t.values()[i])
    }

    /// Unary plus prior cost of giving region `i` level `t`.
    #[inline]
    pub(crate) fn node_cost(&self, i: usize, t: usize) -> f64 {
        let z = self.label_values[t];
        z * self.s0t.values()[i] + (1.0 - z) * self.s1t.values()[i] + self.prior_costs[t]
    }

    /// `β·ψ + γ·φ` for neighbor pair `k` at levels `(ti, tj)`.
    #[inline]
    pub(crate) fn edge_cost(&self, k: usize, ti: usize, tj: usize) -> f64 {
        let (zi, zj) = (self.label_values[ti], self.label_values[tj]);
        self.params.beta * psi(zi, zj) + self.params.gamma * phi_multi(zi, zj, &self.phi_bp[k])
    }

    pub fn check_mask(&self, mask: &Mask) -> Result<()> {
        if mask.len() != self.len() || mask.space() != self.space {
            return Err(Error::Shape(format!(
                "mask ({} regions, m = {}) does not fit instance ({} regions, m = {})",
                mask.len(),
                mask.space().m(),
                self.len(),
                self.space.m()
            )));
        }
        Ok(())
    }
}

/// Energy split into its four groups.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyTerms {
    pub unary: f64,
    /// `β Σ ψ`
    pub label_smoothness: f64,
    /// `γ Σ φ`
    pub data_smoothness: f64,
    /// `−η Σ log p`
    pub prior: f64,
}

impl EnergyTerms {
    pub fn total(&self) -> f64 {
        self.unary + self.label_smoothness + self.data_smoothness + self.prior
    }
}

pub fn energy_terms(mask: &Mask, inst: &EnergyInstance) -> Result<EnergyTerms> {
    inst.check_mask(mask)?;
    let p = inst.params();
    let mut terms = EnergyTerms::default();
    for (i, &t) in mask.levels().iter().enumerate() {
        terms.unary += inst.unary(i, inst.label_values[t])?;
        terms.prior += inst.prior_costs[t];
    }
    for (k, &(i, j)) in inst.neighbors().iter().enumerate() {
        let (zi, zj) = (mask.value(i), mask.value(j));
        terms.label_smoothness += psi(zi, zj);
        terms.data_smoothness += phi_multi(zi, zj, &inst.phi_bp[k]);
    }
    terms.label_smoothness *= p.beta;
    terms.data_smoothness *= p.gamma;
    Ok(terms)
}

pub fn total_energy(mask: &Mask, inst: &EnergyInstance) -> Result<f64> {
    inst.check_mask(mask)?;
    Ok(energy_of_levels(mask.levels(), inst))
}

/// Same sum as [`total_energy`] without validation.
pub(crate) fn energy_of_levels(levels: &[usize], inst: &EnergyInstance) -> f64 {
    let mut e: f64 = levels
        .iter()
        .enumerate()
        .map(|(i, &t)| inst.node_cost(i, t))
        .sum();
    for (k, &(i, j)) in inst.neighbors().iter().enumerate() {
        e += inst.edge_cost(k, levels[i], levels[j]);
    }
    e
}

/// Exhaustive global minimizer; ties go to the lexicographically smallest mask.
pub fn brute_force_min(inst: &EnergyInstance) -> Result<(Mask, f64)> {
    let n = inst.len();
    let k = inst.space().count();
    let total = (0..n).try_fold(1usize, |acc, _| acc.checked_mul(k).filter(|&v| v <= BRUTE_FORCE_LIMIT));
    if total.is_none() {
        return Err(Error::TooLarge(format!("{k}^{n} masks exceeds {BRUTE_FORCE_LIMIT}")));
    }
    let mut levels = vec![0usize; n];
    let mut best = (levels.clone(), energy_of_levels(&levels, inst));
    // odometer with the last entry fastest visits masks in lexicographic order
    loop {
        let mut pos = n;
        loop {
            if pos == 0 {
                let mask = Mask::from_levels(inst.grid(), inst.space(), best.0)?;
                return Ok((mask, best.1));
            }
            pos -= 1;
            levels[pos] += 1;
            if levels[pos] < k {
                break;
            }
            levels[pos] = 0;
        }
        let e = energy_of_levels(&levels, inst);
        if e < best.1 {
            best = (levels.clone(), e);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sal(v: &[f64]) -> DownsampledSaliency {
        let t: f64 = v.iter().sum();
        DownsampledSaliency::new(v.iter().map(|x| x / t).collect()).unwrap()
    }

    fn instance(g: usize, s0: &[f64], s1: &[f64], phi: Vec<PhiTable>, params: EnergyParams) -> EnergyInstance {
        EnergyInstance::new(Grid::new(g).unwrap(), sal(s0), sal(s1), phi, params).unwrap()
    }

    #[test]
    fn unary_examples() {
        let inst = instance(1, &[1.0], &[1.0], vec![], EnergyParams::default());
        assert_eq!(inst.unary(0, 0.0).unwrap(), 1.0);
        assert!(matches!(inst.unary(1, 0.0), Err(Error::Index { .. })));
        let g = Grid::new(2).unwrap();
        let s0 = DownsampledSaliency::new(vec![0.4, 0.2, 0.2, 0.2]).unwrap();
        let s1 = DownsampledSaliency::new(vec![0.2, 0.3, 0.3, 0.2]).unwrap();
        let inst = EnergyInstance::new(g, s0, s1, vec![[0.0; 4]; 4], EnergyParams::default()).unwrap();
        assert_eq!(inst.unary(0, 0.0).unwrap(), 0.2);
        assert_eq!(inst.unary(0, 1.0).unwrap(), 0.4);
        assert!((inst.unary(0, 0.5).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn psi_examples() {
        for a in [0.0, 0.5, 1.0] {
            assert_eq!(psi(a, a), 0.0);
        }
        assert_eq!(psi(0.0, 1.0), 1.0);
        assert_eq!(psi(0.0, 0.5), 0.25);
    }

    #[test]
    fn phi_b_prime_examples() {
        assert_eq!(phi_b_prime([0.0; 4]), [0.0; 4]);
        let p = phi_b_prime([0.2, 0.4, 0.6, 0.8]);
        for (got, want) in p.iter().zip([0.7, 0.9, 1.1, 1.3]) {
            assert!((got - want).abs() < 1e-12, "{p:?}");
        }
        assert_eq!(phi_b_prime_defect(&p), 0.0);
        // (1,1) entry agrees with the closed form
        let [a, b, c, d] = [0.13, 0.77, 0.31, 0.59];
        let p = phi_b_prime([a, b, c, d]);
        assert!((p[3] - (d + (b + c) / 2.0)).abs() < 1e-15);
    }

    #[test]
    fn phi_multi_examples() {
        let p = [0.7, 0.9, 1.1, 1.3];
        assert_eq!(phi_multi(0.0, 0.0, &p), 0.7);
        assert_eq!(phi_multi(1.0, 1.0, &p), 1.3);
        assert_eq!(phi_multi(1.0, 0.0, &p), 1.1);
        assert_eq!(phi_multi(0.0, 1.0, &p), 0.9);
        assert!((phi_multi(0.5, 0.5, &p) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn prior_examples() {
        let pmf = |lam: f64| -> Vec<f64> {
            [0.0, 0.5, 1.0].iter().map(|&z| prior_log_pmf(z, lam, 2).unwrap().exp()).collect()
        };
        for (got, want) in pmf(0.5).iter().zip([0.25, 0.5, 0.25]) {
            assert!((got - want).abs() < 1e-12);
        }
        for (got, want) in pmf(0.2).iter().zip([0.64, 0.32, 0.04]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!(matches!(prior_log_pmf(0.3, 0.5, 2), Err(Error::Domain(_))));
        // endpoints stay finite
        assert!(prior_log_pmf(1.0, 0.0, 2).unwrap().is_finite());
    }

    #[test]
    fn dp_boundary_examples() {
        let g = Grid::for_image(2, 4, 4).unwrap();
        let flat = ImageTensor::filled(3, 4, 4, 0.4).unwrap();
        assert_eq!(dp_boundary(&flat, &flat, &g, 0, 1).unwrap(), 0.0);

        let black = ImageTensor::filled(1, 4, 4, 0.0).unwrap();
        let white = ImageTensor::filled(1, 4, 4, 1.0).unwrap();
        assert_eq!(dp_boundary(&black, &white, &g, 0, 2).unwrap(), 1.0);

        // region 0 right column (0, 0.5); region 1 left column (0.5, 0.5)
        let mut data = vec![0.0f32; 16];
        data[4 + 1] = 0.5;
        data[2] = 0.5;
        data[4 + 2] = 0.5;
        let img = ImageTensor::new(1, 4, 4, data).unwrap();
        assert_eq!(dp_boundary(&img, &img, &g, 0, 1).unwrap(), 0.25);
        assert_eq!(dp_boundary(&img, &img, &g, 1, 0).unwrap(), 0.25);

        assert!(matches!(dp_boundary(&img, &img, &g, 0, 3), Err(Error::NotAdjacent(0, 3))));
    }

    #[test]
    fn total_energy_examples() {
        let g = Grid::new(2).unwrap();
        let params = EnergyParams { beta: 0.0, gamma: 0.0, eta: 0.0, ..Default::default() };
        let inst = EnergyInstance::new(
            g,
            DownsampledSaliency::uniform(4),
            DownsampledSaliency::uniform(4),
            vec![[0.3; 4]; 4],
            params,
        )
        .unwrap();
        let space = inst.space();
        let e0 = total_energy(&Mask::constant(&g, space, 0).unwrap(), &inst).unwrap();
        for levels in [vec![0, 1, 2, 1], vec![2, 2, 2, 2], vec![1, 0, 0, 2]] {
            let e = total_energy(&Mask::from_levels(&g, space, levels).unwrap(), &inst).unwrap();
            assert!((e - e0).abs() < 1e-15);
        }

        let one = instance(1, &[1.0], &[1.0], vec![], EnergyParams { eta: 0.0, ..Default::default() });
        let m = Mask::constant(one.grid(), one.space(), 1).unwrap();
        assert_eq!(total_energy(&m, &one).unwrap(), one.unary(0, 0.5).unwrap());

        let wrong = Mask::constant(&Grid::new(3).unwrap(), one.space(), 0).unwrap();
        assert!(matches!(total_energy(&wrong, &one), Err(Error::Shape(_))));
    }

    #[test]
    fn total_energy_matches_hand_sum_on_2x2() {
        // values chosen by hand; neighbors of a 2x2 grid are (0,1), (0,2), (1,3), (2,3)
        let g = Grid::new(2).unwrap();
        let s0 = [0.1, 0.2, 0.3, 0.4];
        let s1 = [0.4, 0.3, 0.2, 0.1];
        let phi = vec![[0.1, 0.2, 0.3, 0.4], [0.5, 0.5, 0.5, 0.5], [0.0, 1.0, 0.0, 1.0], [0.9, 0.1, 0.2, 0.3]];
        let params = EnergyParams { beta: 1.2, gamma: 0.5, eta: 0.2, lambda: 0.3, ..Default::default() };
        let inst = EnergyInstance::new(
            g,
            DownsampledSaliency::new(s0.to_vec()).unwrap(),
            DownsampledSaliency::new(s1.to_vec()).unwrap(),
            phi.clone(),
            params,
        )
        .unwrap();
        let z = [0.0, 0.5, 1.0, 0.5];
        let mask = Mask::from_values(&g, inst.space(), &z).unwrap();

        let unary: f64 = (0..4).map(|i| z[i] * s0[i] + (1.0 - z[i]) * s1[i]).sum();
        let pairs = [(0, 1), (0, 2), (1, 3), (2, 3)];
        let mut smooth = 0.0;
        let mut data = 0.0;
        for (k, &(i, j)) in pairs.iter().enumerate() {
            smooth += (z[i] - z[j]) * (z[i] - z[j]);
            let [a, b, c, d] = phi[k];
            let p00 = a + (b + c) / 2.0;
            let p01 = b + (a + d) / 2.0;
            let p10 = c + (a + d) / 2.0;
            let p11 = d + (b + c) / 2.0;
            data += z[i] * z[j] * p11 + z[i] * (1.0 - z[j]) * p10 + (1.0 - z[i]) * z[j] * p01
                + (1.0 - z[i]) * (1.0 - z[j]) * p00;
        }
        let pmf: [f64; 3] = [0.49, 0.42, 0.09];
        let prior: f64 = z.iter().map(|&zi| -pmf[(zi * 2.0) as usize].ln()).sum();
        let expected = unary + 1.2 * smooth + 0.5 * data + 0.2 * prior;

        let terms = energy_terms(&mask, &inst).unwrap();
        assert!((terms.unary - unary).abs() < 1e-12);
        assert!((terms.prior - 0.2 * prior).abs() < 1e-12);
        assert!((total_energy(&mask, &inst).unwrap() - expected).abs() < 1e-12);
        assert!((terms.total() - expected).abs() < 1e-12);
    }

    #[test]
    fn brute_force_examples() {
        // unary only: each region independently picks its cheaper side
        let params = EnergyParams { beta: 0.0, gamma: 0.0, eta: 0.0, ..Default::default() };
        let inst = instance(2, &[0.1, 0.4, 0.3, 0.2], &[0.25, 0.25, 0.25, 0.25], vec![[0.0; 4]; 4], params);
        let (mask, _) = brute_force_min(&inst).unwrap();
        assert_eq!(mask.levels(), &[2, 0, 0, 2]);

        let one = instance(1, &[1.0], &[1.0], vec![], EnergyParams { lambda: 0.9, ..Default::default() });
        let (mask, e) = brute_force_min(&one).unwrap();
        let per_label: Vec<f64> = (0..3)
            .map(|t| total_energy(&Mask::constant(one.grid(), one.space(), t).unwrap(), &one).unwrap())
            .collect();
        let best = per_label.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(e, best);
        assert_eq!(mask.levels(), &[2]);

        // ties go to the lexicographically smallest mask
        let flat = instance(2, &[1.0; 4], &[1.0; 4], vec![[0.0; 4]; 4], params);
        assert_eq!(brute_force_min(&flat).unwrap().0.levels(), &[0, 0, 0, 0]);

        let big = instance(13, &[1.0; 169], &[1.0; 169], vec![[0.0; 4]; 312], params);
        assert!(matches!(brute_force_min(&big), Err(Error::TooLarge(_))));
    }

    #[test]
    fn label_space_helpers() {
        let s = LabelSpace::new(2).unwrap();
        assert_eq!(s.labels(), vec![0.0, 0.5, 1.0]);
        assert_eq!(s.nearest(0.24), 0);
        assert_eq!(s.nearest(0.26), 1);
        assert_eq!(s.nearest(0.9), 2);
        assert!(LabelSpace::new(0).is_err());
        let g = Grid::new(2).unwrap();
        let m = Mask::from_levels(&g, s, vec![0, 1, 2, 2]).unwrap();
        assert_eq!(m.mean(), 0.625);
        assert_eq!(m.complement().levels(), &[2, 1, 0, 0]);
        assert!(Mask::from_levels(&g, s, vec![0, 3, 0, 0]).is_err());
    }

    fn labels_m2() -> impl Strategy<Value = (f64, f64)> {
        (0usize..3, 0usize..3).prop_map(|(a, b)| (a as f64 / 2.0, b as f64 / 2.0))
    }

    proptest! {
        #[test]
        fn pairwise_term_is_submodular(
            phi in prop::array::uniform4(0.0f64..=1.0),
            beta in 0.0f64..3.0,
            gamma in 0.0f64..3.0,
            (x, y) in labels_m2(),
        ) {
            let p = phi_b_prime(phi);
            let e = |a: f64, b: f64| beta * psi(a, b) + gamma * phi_multi(a, b, &p);
            prop_assert!(e(x, x) + e(y, y) <= e(x, y) + e(y, x) + 1e-9);
        }

        #[test]
        fn phi_multi_hits_corners(phi in prop::array::uniform4(0.0f64..=1.0)) {
            let p = phi_b_prime(phi);
            prop_assert_eq!(phi_b_prime_defect(&p), 0.0);
            prop_assert_eq!(phi_multi(0.0, 0.0, &p), p[0]);
            prop_assert_eq!(phi_multi(0.0, 1.0, &p), p[1]);
            prop_assert_eq!(phi_multi(1.0, 0.0, &p), p[2]);
            prop_assert_eq!(phi_multi(1.0, 1.0, &p), p[3]);
        }

        #[test]
        fn prior_is_a_distribution_with_mean_lambda(lambda in 0.001f64..0.999, m in 1usize..8) {
            let pmf: Vec<f64> = (0..=m).map(|t| prior_log_pmf(t as f64 / m as f64, lambda, m).unwrap().exp()).collect();
            let total: f64 = pmf.iter().sum();
            let mean: f64 = pmf.iter().enumerate().map(|(t, p)| t as f64 / m as f64 * p).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert!((mean - lambda).abs() < 1e-9);
        }
    }
}
