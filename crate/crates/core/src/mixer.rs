//! The mixing pipeline.
//!
//! One call of [`puzzle_mix`]:
//!
//! 1. draws the grid side from `grid_choices`, then `λ ~ Beta(α, α)` (unless a
//!    fixed λ is configured), both from a ChaCha8 stream seeded with `seed`;
//! 2. pools and normalizes both saliency maps onto the grid;
//! 3. optimizes the mask by α-β swap with identity transport, starting from
//!    the constant mask at the label nearest λ;
//! 4. optionally solves one masked transport per input (`1 − z` for `x₀`,
//!    `z` for `x₁`);
//! 5. composes `h = (1 − Z) ⊙ Π₀ᵀx₀ + Z ⊙ Π₁ᵀx₁` with `Z` replicated over each
//!    region's pixels.
//!
//! Later cycles of [`run_cycles`] repeat steps 3–5 on transported saliency and
//! images, warm-starting the swap from the previous mask.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::energy::{EnergyInstance, EnergyParams, LabelSpace, Mask};
use crate::error::{Error, Result};
use crate::graphcut::{alpha_beta_swap, initial_mask, SwapOptions, DEFAULT_MAX_SWEEPS};
use crate::saliency::{region_saliency, DownsampledSaliency, Grid, GRID_SIDES};
use crate::tensor_io::{FloatTensor, ImageTensor};
use crate::transport::{
    apply_plan, build_cost_matrix, discounted_cost, masked_transport, TransportPlan,
};

/// Version tag written into every metadata document.
pub const METADATA_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixConfig {
    /// Beta(α, α) parameter for the mixing weight.
    pub alpha: f64,
    pub params: EnergyParams,
    /// Grid sides to sample from.
    pub grid_choices: Vec<usize>,
    pub seed: u64,
    pub cycles: usize,
    pub transport_enabled: bool,
    /// Use this mixing weight instead of drawing one.
    pub lambda: Option<f64>,
    pub max_sweeps: usize,
}

impl Default for MixConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            params: EnergyParams::default(),
            grid_choices: GRID_SIDES.to_vec(),
            seed: 0,
            cycles: 1,
            transport_enabled: true,
            lambda: None,
            max_sweeps: DEFAULT_MAX_SWEEPS,
        }
    }
}

impl MixConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::Config(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if self.grid_choices.is_empty() {
            return Err(Error::Config("grid_choices is empty".into()));
        }
        if let Some(g) = self.grid_choices.iter().find(|g| !GRID_SIDES.contains(g)) {
            return Err(Error::Config(format!("grid side {g} is not one of {GRID_SIDES:?}")));
        }
        if self.cycles == 0 {
            return Err(Error::Config("cycles must be >= 1".into()));
        }
        if self.max_sweeps == 0 {
            return Err(Error::Config("max_sweeps must be >= 1".into()));
        }
        if let Some(l) = self.lambda {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::Config(format!("lambda must lie in [0, 1], got {l}")));
            }
        }
        self.params.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvConfig {
    /// ℓ∞ radius of the perturbation.
    pub epsilon: f32,
    /// Signed-gradient step.
    pub tau: f32,
    /// Probability that an input is perturbed.
    pub p: f64,
    pub seed: u64,
}

impl Default for AdvConfig {
    fn default() -> Self {
        Self {
            epsilon: 10.0 / 255.0,
            tau: 12.0 / 255.0,
            p: 0.1,
            seed: 0,
        }
    }
}

impl AdvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::Config(format!("p must lie in [0, 1], got {}", self.p)));
        }
        if !(self.epsilon >= 0.0 && self.tau >= 0.0) {
            return Err(Error::Config("epsilon and tau must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixMetrics {
    pub mixed_saliency: f64,
    pub total_variation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub before: f64,
    pub after: f64,
    /// Energy after each accepted swap move.
    pub accepted: Vec<f64>,
    pub sweeps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransportReport {
    pub iterations: usize,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixResult {
    pub mixed: ImageTensor,
    pub mask: Mask,
    pub plan0: TransportPlan,
    pub plan1: TransportPlan,
    pub grid: Grid,
    /// Weight the prior was centred on (drawn or fixed).
    pub lambda_sampled: f64,
    /// Mean of the mask.
    pub lambda_effective: f64,
    /// Region saliency of each input before transport.
    pub saliency: [DownsampledSaliency; 2],
    /// Set when an input's pooled saliency was all zero.
    pub degenerate_saliency: [bool; 2],
    pub metrics: MixMetrics,
    pub energy: EnergyReport,
    pub transport: [TransportReport; 2],
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixMetadata {
    pub schema: u32,
    pub seed: u64,
    pub lambda_sampled: f64,
    pub lambda_effective: f64,
    pub lambda_fixed: bool,
    pub grid: usize,
    pub m: usize,
    pub params: EnergyParams,
    pub alpha: f64,
    pub transport_enabled: bool,
    pub mask: Vec<f64>,
    pub plan0: Vec<usize>,
    pub plan1: Vec<usize>,
    pub energy: EnergyReport,
    pub transport: [TransportReport; 2],
    pub metrics: MixMetrics,
    pub degenerate_saliency: [bool; 2],
    pub cycles: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cycle_change: Option<CycleChange>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adversarial: Option<AdvMetadata>,
}

/// Change between the first and last cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleChange {
    pub mask_fraction: f64,
    pub pixel_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvMetadata {
    pub seed: u64,
    pub epsilon: f32,
    pub tau: f32,
    pub p: f64,
    pub perturbed: [bool; 2],
    pub delta: f64,
}

impl MixResult {
    pub fn metadata(&self, cfg: &MixConfig) -> MixMetadata {
        MixMetadata {
            schema: METADATA_SCHEMA,
            seed: self.seed,
            lambda_sampled: self.lambda_sampled,
            lambda_effective: self.lambda_effective,
            lambda_fixed: cfg.lambda.is_some(),
            grid: self.grid.side(),
            m: self.mask.space().m(),
            params: EnergyParams {
                lambda: self.lambda_sampled,
                ..cfg.params
            },
            alpha: cfg.alpha,
            transport_enabled: cfg.transport_enabled,
            mask: self.mask.values(),
            plan0: self.plan0.permutation().unwrap_or_default(),
            plan1: self.plan1.permutation().unwrap_or_default(),
            energy: self.energy.clone(),
            transport: self.transport,
            metrics: self.metrics,
            degenerate_saliency: self.degenerate_saliency,
            cycles: 1,
            cycle_change: None,
            adversarial: None,
        }
    }
}

/// One draw from `Beta(α, α)`.
pub fn sample_lambda<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> Result<f64> {
    let beta = Beta::new(alpha, alpha).map_err(|e| Error::Config(format!("Beta({alpha}, {alpha}): {e}")))?;
    Ok(beta.sample(rng))
}

/// `(1 − λ)·y₀ + λ·y₁`.
pub fn mix_labels(y0: &[f64], y1: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if y0.len() != y1.len() {
        return Err(Error::Shape(format!("label vectors of length {} and {}", y0.len(), y1.len())));
    }
    Ok(y0.iter().zip(y1).map(|(a, b)| (1.0 - lambda) * a + lambda * b).collect())
}

/// `(1 − Z) ⊙ Π₀ᵀx₀ + Z ⊙ Π₁ᵀx₁` with `Z` constant on each region.
pub fn compose(
    x0: &ImageTensor,
    x1: &ImageTensor,
    mask: &Mask,
    plan0: &TransportPlan,
    plan1: &TransportPlan,
    grid: &Grid,
) -> Result<ImageTensor> {
    if !x0.same_shape(x1) {
        return Err(Error::Shape("inputs differ in shape".into()));
    }
    if mask.len() != grid.len() {
        return Err(Error::Shape("mask does not match grid".into()));
    }
    let t0 = apply_plan(plan0, x0, grid)?;
    let t1 = apply_plan(plan1, x1, grid)?;
    blend(&t0, &t1, mask, grid)
}

fn blend(t0: &ImageTensor, t1: &ImageTensor, mask: &Mask, grid: &Grid) -> Result<ImageTensor> {
    let (c, h, w) = (t0.channels(), t0.height(), t0.width());
    let (rh, rw) = (grid.region_h(), grid.region_w());
    let mut out = Vec::with_capacity(c * h * w);
    let (a, b) = (t0.data(), t1.data());
    for k in 0..c {
        for y in 0..h {
            for x in 0..w {
                let z = mask.value((y / rh) * grid.side() + x / rw) as f32;
                let idx = (k * h + y) * w + x;
                out.push((1.0 - z) * a[idx] + z * b[idx]);
            }
        }
    }
    ImageTensor::from_clamped(c, h, w, out)
}

/// `‖(1 − z) ⊙ Π₀ᵀs₀ + z ⊙ Π₁ᵀs₁‖₁`.
pub fn metric_mixed_saliency(
    mask: &Mask,
    plan0: &TransportPlan,
    plan1: &TransportPlan,
    s0: &DownsampledSaliency,
    s1: &DownsampledSaliency,
) -> Result<f64> {
    if s0.len() != mask.len() || s1.len() != mask.len() {
        return Err(Error::Shape("saliency and mask sizes differ".into()));
    }
    let t0 = plan0.transport_vector(s0.values())?;
    let t1 = plan1.transport_vector(s1.values())?;
    Ok((0..mask.len())
        .map(|i| {
            let z = mask.value(i);
            ((1.0 - z) * t0[i] + z * t1[i]).abs()
        })
        .sum())
}

/// Mean absolute difference over all horizontally and vertically adjacent
/// pixel pairs, averaged over channels.
pub fn metric_total_variation(img: &ImageTensor) -> f64 {
    let (c, h, w) = (img.channels(), img.height(), img.width());
    let pairs = h * w.saturating_sub(1) + w * h.saturating_sub(1);
    if pairs == 0 {
        return 0.0;
    }
    let mut per_channel = 0.0;
    for k in 0..c {
        let mut sum = 0.0f64;
        for y in 0..h {
            for x in 0..w {
                let v = img.get(k, y, x) as f64;
                if x + 1 < w {
                    sum += (img.get(k, y, x + 1) as f64 - v).abs();
                }
                if y + 1 < h {
                    sum += (img.get(k, y + 1, x) as f64 - v).abs();
                }
            }
        }
        per_channel += sum / pairs as f64;
    }
    per_channel / c as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineKind {
    /// One axis-aligned box of `x₁` covering about a λ fraction of regions.
    BoxCutMix,
    /// Every region at the label nearest λ (input mixup).
    ConstantInputMix,
}

/// Box size `(h, w)` on a `g × g` grid whose area is closest to `cells`,
/// preferring squarer boxes, then shorter ones.
fn box_dims(g: usize, cells: usize) -> (usize, usize) {
    let mut best = (0, 0);
    let mut key = (cells, 0usize);
    for h in 0..=g {
        for w in 0..=g {
            let k = ((h * w).abs_diff(cells), h.abs_diff(w));
            if k < key {
                key = k;
                best = (h, w);
            }
        }
    }
    best
}

pub fn baseline_mask<R: Rng + ?Sized>(
    kind: BaselineKind,
    lambda: f64,
    grid: &Grid,
    space: LabelSpace,
    rng: &mut R,
) -> Result<Mask> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Domain(format!("lambda {lambda} outside [0, 1]")));
    }
    match kind {
        BaselineKind::ConstantInputMix => Mask::constant(grid, space, space.nearest(lambda)),
        BaselineKind::BoxCutMix => {
            let g = grid.side();
            let cells = (lambda * grid.len() as f64).round() as usize;
            let (bh, bw) = box_dims(g, cells);
            let top = rng.random_range(0..=g - bh);
            let left = rng.random_range(0..=g - bw);
            let mut levels = vec![0; grid.len()];
            for r in top..top + bh {
                for c in left..left + bw {
                    levels[r * g + c] = space.m();
                }
            }
            Mask::from_levels(grid, space, levels)
        }
    }
}

struct Prepared {
    grid: Grid,
    lambda: f64,
    saliency: [DownsampledSaliency; 2],
    degenerate: [bool; 2],
}

fn prepare(
    x0: &ImageTensor,
    x1: &ImageTensor,
    s0_full: &FloatTensor,
    s1_full: &FloatTensor,
    cfg: &MixConfig,
) -> Result<Prepared> {
    cfg.validate()?;
    if !x0.same_shape(x1) {
        return Err(Error::Shape(format!("inputs are {:?} and {:?}", x0.shape(), x1.shape())));
    }
    for s in [s0_full, s1_full] {
        let spatial = &s.shape()[s.rank().saturating_sub(2)..];
        if spatial != [x0.height(), x0.width()] {
            return Err(Error::Shape(format!(
                "saliency map {:?} does not match {}x{} image",
                s.shape(),
                x0.height(),
                x0.width()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let side = cfg.grid_choices[rng.random_range(0..cfg.grid_choices.len())];
    let grid = Grid::for_image(side, x0.height(), x0.width())?;
    let lambda = match cfg.lambda {
        Some(l) => l,
        None => sample_lambda(cfg.alpha, &mut rng)?,
    };
    let n0 = region_saliency(s0_full, &grid)?;
    let n1 = region_saliency(s1_full, &grid)?;
    Ok(Prepared {
        grid,
        lambda,
        degenerate: [n0.degenerate, n1.degenerate],
        saliency: [n0.saliency, n1.saliency],
    })
}

struct CycleState {
    mask: Mask,
    plans: [TransportPlan; 2],
    energy: EnergyReport,
    transport: [TransportReport; 2],
}

fn transported(plan: &TransportPlan, s: &DownsampledSaliency) -> Result<DownsampledSaliency> {
    if plan.is_identity() {
        return Ok(s.clone());
    }
    DownsampledSaliency::new(plan.transport_vector(s.values())?)
}

/// Mask step given the current plans, then plan step given the new mask.
fn run_cycle(
    inputs: [&ImageTensor; 2],
    prep: &Prepared,
    cfg: &MixConfig,
    previous: Option<&CycleState>,
) -> Result<CycleState> {
    let grid = prep.grid;
    let n = grid.len();
    let plans = match previous {
        Some(p) => p.plans.clone(),
        None => [TransportPlan::identity(n), TransportPlan::identity(n)],
    };
    let x0t = apply_plan(&plans[0], inputs[0], &grid)?;
    let x1t = apply_plan(&plans[1], inputs[1], &grid)?;
    let params = EnergyParams {
        lambda: prep.lambda,
        ..cfg.params
    };
    let inst = EnergyInstance::from_images(
        &x0t,
        &x1t,
        grid,
        transported(&plans[0], &prep.saliency[0])?,
        transported(&plans[1], &prep.saliency[1])?,
        params,
    )?;
    let init = match previous {
        Some(p) => p.mask.clone(),
        None => initial_mask(&inst)?,
    };
    let swap = alpha_beta_swap(
        &inst,
        &init,
        SwapOptions {
            max_sweeps: cfg.max_sweeps,
        },
    )?;
    let mask = swap.mask;

    let (plans, transport) = if cfg.transport_enabled {
        let base = build_cost_matrix(&grid, cfg.params.xi);
        let z = mask.values();
        let keep: Vec<f64> = z.iter().map(|v| 1.0 - v).collect();
        let costs = [
            discounted_cost(&base, prep.saliency[0].values(), &keep)?,
            discounted_cost(&base, prep.saliency[1].values(), &z)?,
        ];
        let solved = [masked_transport(&costs[0]), masked_transport(&costs[1])];
        if solved.iter().any(|p| !p.converged) {
            return Err(Error::NotConverged);
        }
        let reports = [0, 1].map(|k| TransportReport {
            iterations: solved[k].iterations,
            objective: solved[k].objective(&costs[k]),
        });
        (solved, reports)
    } else {
        let id = TransportPlan::identity(n);
        let report = TransportReport {
            iterations: 0,
            objective: 0.0,
        };
        ([id.clone(), id], [report, report])
    };

    Ok(CycleState {
        mask,
        plans,
        energy: EnergyReport {
            before: swap.initial_energy,
            after: swap.energy,
            accepted: swap.accepted,
            sweeps: swap.sweeps,
        },
        transport,
    })
}

fn finish(inputs: [&ImageTensor; 2], prep: &Prepared, state: CycleState, seed: u64) -> Result<MixResult> {
    let [plan0, plan1] = state.plans;
    let mixed = compose(inputs[0], inputs[1], &state.mask, &plan0, &plan1, &prep.grid)?;
    let mixed_saliency =
        metric_mixed_saliency(&state.mask, &plan0, &plan1, &prep.saliency[0], &prep.saliency[1])?;
    let total_variation = metric_total_variation(&mixed);
    Ok(MixResult {
        lambda_effective: state.mask.mean(),
        metrics: MixMetrics {
            mixed_saliency,
            total_variation,
        },
        mixed,
        mask: state.mask,
        plan0,
        plan1,
        grid: prep.grid,
        lambda_sampled: prep.lambda,
        saliency: prep.saliency.clone(),
        degenerate_saliency: prep.degenerate,
        energy: state.energy,
        transport: state.transport,
        seed,
    })
}

/// One complete mask/transport cycle (see the module docs). `cfg.cycles` is
/// ignored here; use [`run_cycles`] for more.
pub fn puzzle_mix(
    x0: &ImageTensor,
    x1: &ImageTensor,
    s0_full: &FloatTensor,
    s1_full: &FloatTensor,
    cfg: &MixConfig,
) -> Result<MixResult> {
    let prep = prepare(x0, x1, s0_full, s1_full, cfg)?;
    let state = run_cycle([x0, x1], &prep, cfg, None)?;
    finish([x0, x1], &prep, state, cfg.seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleReport {
    /// Result after each cycle; the first equals [`puzzle_mix`].
    pub results: Vec<MixResult>,
    /// Fraction of mask entries that differ between the first and last cycle.
    pub mask_change_fraction: f64,
    /// Fraction of pixel locations whose mixed value differs in any channel.
    pub pixel_change_fraction: f64,
}

impl CycleReport {
    pub fn image_changed(&self) -> bool {
        self.pixel_change_fraction > 0.0
    }

    pub fn last(&self) -> &MixResult {
        &self.results[self.results.len() - 1]
    }

    /// Metadata of the last cycle.
    pub fn metadata(&self, cfg: &MixConfig) -> MixMetadata {
        MixMetadata {
            cycles: self.results.len(),
            cycle_change: Some(CycleChange {
                mask_fraction: self.mask_change_fraction,
                pixel_fraction: self.pixel_change_fraction,
            }),
            ..self.last().metadata(cfg)
        }
    }
}

/// Alternates mask and transport steps `cfg.cycles` times.
pub fn run_cycles(
    x0: &ImageTensor,
    x1: &ImageTensor,
    s0_full: &FloatTensor,
    s1_full: &FloatTensor,
    cfg: &MixConfig,
) -> Result<CycleReport> {
    let prep = prepare(x0, x1, s0_full, s1_full, cfg)?;
    let mut results = Vec::with_capacity(cfg.cycles);
    let mut previous: Option<CycleState> = None;
    for _ in 0..cfg.cycles {
        let state = run_cycle([x0, x1], &prep, cfg, previous.as_ref())?;
        let keep = CycleState {
            mask: state.mask.clone(),
            plans: state.plans.clone(),
            energy: state.energy.clone(),
            transport: state.transport,
        };
        results.push(finish([x0, x1], &prep, state, cfg.seed)?);
        previous = Some(keep);
    }
    let (first, last) = (&results[0], &results[results.len() - 1]);
    let mask_changed = first
        .mask
        .levels()
        .iter()
        .zip(last.mask.levels())
        .filter(|(a, b)| a != b)
        .count();
    let (c, h, w) = (x0.channels(), x0.height(), x0.width());
    let plane = h * w;
    let pixels_changed = (0..plane)
        .filter(|&p| (0..c).any(|k| first.mixed.data()[k * plane + p] != last.mixed.data()[k * plane + p]))
        .count();
    Ok(CycleReport {
        mask_change_fraction: mask_changed as f64 / first.mask.len() as f64,
        pixel_change_fraction: pixels_changed as f64 / plane as f64,
        results,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Puzzle,
    Box,
    Constant,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Puzzle, Method::Box, Method::Constant];

    pub fn name(self) -> &'static str {
        match self {
            Method::Puzzle => "puzzle",
            Method::Box => "box",
            Method::Constant => "constant",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub method: Method,
    pub metrics: MixMetrics,
}

/// Mixed-saliency mass and total variation of the optimized mix and of the
/// box and constant baselines at a fixed λ, all on the grid drawn for the
/// optimized mix. The box position comes from stream 1 of `cfg.seed`.
pub fn compare_methods(
    x0: &ImageTensor,
    x1: &ImageTensor,
    s0_full: &FloatTensor,
    s1_full: &FloatTensor,
    lambda: f64,
    cfg: &MixConfig,
) -> Result<[MethodMetrics; 3]> {
    let cfg = MixConfig {
        lambda: Some(lambda),
        ..cfg.clone()
    };
    let puzzle = puzzle_mix(x0, x1, s0_full, s1_full, &cfg)?;
    let grid = puzzle.grid;
    let space = puzzle.mask.space();
    let id = TransportPlan::identity(grid.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let baseline = |kind: BaselineKind, rng: &mut ChaCha8Rng| -> Result<MixMetrics> {
        let mask = baseline_mask(kind, lambda, &grid, space, rng)?;
        let mixed = compose(x0, x1, &mask, &id, &id, &grid)?;
        Ok(MixMetrics {
            mixed_saliency: metric_mixed_saliency(&mask, &id, &id, &puzzle.saliency[0], &puzzle.saliency[1])?,
            total_variation: metric_total_variation(&mixed),
        })
    };
    Ok([
        MethodMetrics {
            method: Method::Puzzle,
            metrics: puzzle.metrics,
        },
        MethodMetrics {
            method: Method::Box,
            metrics: baseline(BaselineKind::BoxCutMix, &mut rng)?,
        },
        MethodMetrics {
            method: Method::Constant,
            metrics: baseline(BaselineKind::ConstantInputMix, &mut rng)?,
        },
    ])
}

/// What the adversarial transform did to each input.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvTrace {
    /// Whether each input was perturbed.
    pub perturbed: [bool; 2],
    /// Shared interpolation weight.
    pub delta: f64,
    /// Final perturbation of each perturbed input.
    pub kappa: [Option<Vec<f32>>; 2],
}

impl AdvTrace {
    pub fn metadata(&self, adv: &AdvConfig) -> AdvMetadata {
        AdvMetadata {
            seed: adv.seed,
            epsilon: adv.epsilon,
            tau: adv.tau,
            p: adv.p,
            perturbed: self.perturbed,
            delta: self.delta,
        }
    }
}

fn sign(v: f32) -> f32 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mixing with stochastic signed-gradient perturbations of the inputs.
///
/// Each input is selected with probability `p` and started from uniform noise
/// in `[−ε, ε]`; the mask and plans are optimized on the noisy inputs; then a
/// selected input's noise takes one step `τ·sign(grad)`, is clipped back into
/// `[−ε, ε]`, scaled by a shared `δ ~ U(0, 1)` and added to the clean input.
/// All adversarial draws come from a stream seeded with `adv.seed`, so the
/// mixing draws match [`puzzle_mix`] with the same `cfg`.
#[allow(clippy::too_many_arguments)]
pub fn adversarial_mix(
    x0: &ImageTensor,
    x1: &ImageTensor,
    grad0: &FloatTensor,
    grad1: &FloatTensor,
    s0_full: &FloatTensor,
    s1_full: &FloatTensor,
    cfg: &MixConfig,
    adv: &AdvConfig,
) -> Result<(MixResult, AdvTrace)> {
    adv.validate()?;
    let clean = [x0, x1];
    let grads = [grad0, grad1];
    for (x, g) in clean.iter().zip(grads) {
        if g.shape() != x.shape() {
            return Err(Error::Shape(format!(
                "gradient {:?} does not match image {:?}",
                g.shape(),
                x.shape()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(adv.seed);
    let perturbed = [rng.random_bool(adv.p), rng.random_bool(adv.p)];
    let eps = adv.epsilon;
    let mut kappa: [Option<Vec<f32>>; 2] = [None, None];
    for k in 0..2 {
        if perturbed[k] {
            let len = clean[k].data().len();
            kappa[k] = Some(if eps > 0.0 {
                let noise = Uniform::new_inclusive(-eps, eps).map_err(|e| Error::Config(e.to_string()))?;
                (0..len).map(|_| noise.sample(&mut rng)).collect()
            } else {
                vec![0.0; len]
            });
        }
    }

    let shifted = |k: usize, kappa: &[Option<Vec<f32>>; 2], scale: f32| -> Result<ImageTensor> {
        match &kappa[k] {
            None => Ok(clean[k].clone()),
            Some(kap) => {
                let data = clean[k].data().iter().zip(kap).map(|(x, d)| x + scale * d).collect();
                ImageTensor::from_clamped(clean[k].channels(), clean[k].height(), clean[k].width(), data)
            }
        }
    };
    let noisy = [shifted(0, &kappa, 1.0)?, shifted(1, &kappa, 1.0)?];

    let prep = prepare(&noisy[0], &noisy[1], s0_full, s1_full, cfg)?;
    let state = run_cycle([&noisy[0], &noisy[1]], &prep, cfg, None)?;

    let delta: f64 = rng.random();
    for k in 0..2 {
        if let Some(kap) = kappa[k].as_mut() {
            for (d, g) in kap.iter_mut().zip(grads[k].data()) {
                *d = (*d + adv.tau * sign(*g)).clamp(-eps, eps);
            }
        }
    }
    let finals = [shifted(0, &kappa, delta as f32)?, shifted(1, &kappa, delta as f32)?];
    let result = finish([&finals[0], &finals[1]], &prep, state, cfg.seed)?;
    Ok((
        result,
        AdvTrace {
            perturbed,
            delta,
            kappa,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::saliency::proxy_saliency;

    fn ramp(c: usize, h: usize, w: usize, f: impl Fn(usize, usize, usize) -> f32) -> ImageTensor {
        let mut d = Vec::with_capacity(c * h * w);
        for k in 0..c {
            for y in 0..h {
                for x in 0..w {
                    d.push(f(k, y, x));
                }
            }
        }
        ImageTensor::new(c, h, w, d).unwrap()
    }

    #[test]
    fn beta_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draws: Vec<f64> = (0..100_000).map(|_| sample_lambda(1.0, &mut rng).unwrap()).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 0.5).abs() < 0.01);
        assert!(draws.iter().all(|&l| l > 0.0 && l < 1.0));

        let draws: Vec<f64> = (0..100_000).map(|_| sample_lambda(2.0, &mut rng).unwrap()).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / draws.len() as f64;
        // Beta(2, 2): 2·2 / (4² · 5) = 1/20
        assert!((var - 0.05).abs() < 0.005, "variance {var}");

        assert!(sample_lambda(0.0, &mut rng).is_err());
    }

    #[test]
    fn label_mixing() {
        let y0 = [0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        let y1 = [0.0, 0.0, 0.0, 0.0, 0.0, 1.0];
        assert_eq!(mix_labels(&y0, &y1, 0.0).unwrap(), y0.to_vec());
        assert_eq!(mix_labels(&y0, &y1, 1.0).unwrap(), y1.to_vec());
        assert_eq!(mix_labels(&y0, &y1, 0.25).unwrap(), vec![0.0, 0.0, 0.75, 0.0, 0.0, 0.25]);
        assert!(mix_labels(&y0, &y1[..3], 0.5).is_err());
    }

    #[test]
    fn total_variation_examples() {
        assert_eq!(metric_total_variation(&ImageTensor::filled(3, 4, 4, 0.7).unwrap()), 0.0);
        let r = ImageTensor::new(1, 1, 3, vec![0.0, 0.5, 1.0]).unwrap();
        assert_eq!(metric_total_variation(&r), 0.5);
        let checker = ramp(2, 4, 4, |_, y, x| ((x + y) % 2) as f32);
        assert_eq!(metric_total_variation(&checker), 1.0);
    }

    #[test]
    fn mixed_saliency_of_constant_masks() {
        let g = Grid::new(4).unwrap();
        let space = LabelSpace::new(2).unwrap();
        let s0 = DownsampledSaliency::new((1..=16).map(|v| v as f64 / 136.0).collect()).unwrap();
        let s1 = DownsampledSaliency::uniform(16);
        let id = TransportPlan::identity(16);
        for t in 0..3 {
            let mask = Mask::constant(&g, space, t).unwrap();
            let mass = metric_mixed_saliency(&mask, &id, &id, &s0, &s1).unwrap();
            assert!((mass - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn box_baseline_areas() {
        let g = Grid::new(4).unwrap();
        let space = LabelSpace::new(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let zero = baseline_mask(BaselineKind::BoxCutMix, 0.0, &g, space, &mut rng).unwrap();
        assert!(zero.levels().iter().all(|&t| t == 0));
        let one = baseline_mask(BaselineKind::BoxCutMix, 1.0, &g, space, &mut rng).unwrap();
        assert!(one.levels().iter().all(|&t| t == 2));
        for _ in 0..20 {
            let q = baseline_mask(BaselineKind::BoxCutMix, 0.25, &g, space, &mut rng).unwrap();
            assert_eq!(q.mean(), 0.25);
            assert!(q.is_binary());
        }
        let c = baseline_mask(BaselineKind::ConstantInputMix, 0.4, &g, space, &mut rng).unwrap();
        assert!(c.levels().iter().all(|&t| t == 1));
        assert_eq!(box_dims(4, 6), (2, 3));
    }

    #[test]
    fn identical_inputs_mix_to_themselves() {
        let x = ramp(3, 16, 16, |k, y, x| ((k + y * 3 + x * 5) % 17) as f32 / 16.0);
        let s = proxy_saliency(&x);
        let cfg = MixConfig {
            transport_enabled: false,
            seed: 4,
            ..Default::default()
        };
        let r = puzzle_mix(&x, &x, &s, &s, &cfg).unwrap();
        assert_eq!(r.mixed, x);
        assert_eq!(r.lambda_effective, r.mask.mean());
    }

    #[test]
    fn prior_dominated_endpoint_returns_first_input() {
        let x0 = ramp(3, 8, 8, |k, y, _| (k + y) as f32 / 10.0);
        let x1 = ramp(3, 8, 8, |_, _, x| x as f32 / 7.0);
        let flat = FloatTensor::new(vec![8, 8], vec![1.0; 64]).unwrap();
        let cfg = MixConfig {
            lambda: Some(0.0),
            params: EnergyParams { eta: 1000.0, ..Default::default() },
            ..Default::default()
        };
        let r = puzzle_mix(&x0, &x1, &flat, &flat, &cfg).unwrap();
        assert!(r.mask.levels().iter().all(|&t| t == 0));
        assert!(r.plan0.is_identity() && r.plan1.is_identity());
        assert_eq!(r.mixed, x0);
    }

    #[test]
    fn separable_mask_follows_saliency() {
        // beta = gamma = eta = 0, m = 1: region takes x1 exactly where s0 < s1
        let x0 = ramp(1, 8, 8, |_, y, x| ((y * 8 + x) % 5) as f32 / 4.0);
        let x1 = ramp(1, 8, 8, |_, y, x| ((y + x) % 3) as f32 / 2.0);
        let s0 = FloatTensor::new(vec![8, 8], (0..64).map(|v| ((v * 7) % 11) as f32).collect()).unwrap();
        let s1 = FloatTensor::new(vec![8, 8], (0..64).map(|v| ((v * 5) % 13) as f32).collect()).unwrap();
        let cfg = MixConfig {
            params: EnergyParams { beta: 0.0, gamma: 0.0, eta: 0.0, m: 1, ..Default::default() },
            transport_enabled: false,
            grid_choices: vec![4],
            ..Default::default()
        };
        let r = puzzle_mix(&x0, &x1, &s0, &s1, &cfg).unwrap();
        for i in 0..16 {
            let want = usize::from(r.saliency[0].values()[i] < r.saliency[1].values()[i]);
            let (a, b) = (r.saliency[0].values()[i], r.saliency[1].values()[i]);
            if a != b {
                assert_eq!(r.mask.levels()[i], want, "region {i}");
            }
        }
    }

    #[test]
    fn single_cycle_report_matches_puzzle_mix() {
        let x0 = ramp(3, 16, 16, |k, y, x| ((k * 7 + y * x) % 13) as f32 / 12.0);
        let x1 = ramp(3, 16, 16, |k, y, x| ((k + y + 2 * x) % 9) as f32 / 8.0);
        let (s0, s1) = (proxy_saliency(&x0), proxy_saliency(&x1));
        let cfg = MixConfig { seed: 12, ..Default::default() };
        let one = puzzle_mix(&x0, &x1, &s0, &s1, &cfg).unwrap();
        let rep = run_cycles(&x0, &x1, &s0, &s1, &cfg).unwrap();
        assert_eq!(rep.results.len(), 1);
        assert_eq!(rep.results[0], one);
        assert_eq!(rep.mask_change_fraction, 0.0);
    }

    #[test]
    fn config_validation() {
        let bad = [
            MixConfig { alpha: 0.0, ..Default::default() },
            MixConfig { grid_choices: vec![], ..Default::default() },
            MixConfig { grid_choices: vec![3], ..Default::default() },
            MixConfig { cycles: 0, ..Default::default() },
            MixConfig { lambda: Some(1.5), ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        assert!(AdvConfig { p: 1.5, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn shape_mismatches_are_reported() {
        let x0 = ImageTensor::filled(3, 16, 16, 0.5).unwrap();
        let x1 = ImageTensor::filled(3, 16, 8, 0.5).unwrap();
        let s = FloatTensor::new(vec![16, 16], vec![1.0; 256]).unwrap();
        assert!(matches!(puzzle_mix(&x0, &x1, &s, &s, &MixConfig::default()), Err(Error::Shape(_))));
        let odd = ImageTensor::filled(3, 12, 12, 0.5).unwrap();
        let s12 = FloatTensor::new(vec![12, 12], vec![1.0; 144]).unwrap();
        let cfg = MixConfig { grid_choices: vec![8], ..Default::default() };
        assert!(matches!(puzzle_mix(&odd, &odd, &s12, &s12, &cfg), Err(Error::Shape(_))));
    }

    fn pair(seed: u64) -> (ImageTensor, ImageTensor, FloatTensor, FloatTensor) {
        let (x0, x1) = crate::synthetic::synthetic_pairs(seed, 1).unwrap().remove(0);
        let (s0, s1) = (proxy_saliency(&x0), proxy_saliency(&x1));
        (x0, x1, s0, s1)
    }

    fn gradient(seed: u64) -> FloatTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..3 * 32 * 32)
            .map(|k| if k % 7 == 0 { 0.0 } else { rng.random_range(-1.0..1.0) })
            .collect();
        FloatTensor::new(vec![3, 32, 32], data).unwrap()
    }

    #[test]
    fn adversarial_without_perturbation_matches_clean_mix() {
        let (x0, x1, s0, s1) = pair(1);
        let (g0, g1) = (gradient(2), gradient(3));
        let cfg = MixConfig { seed: 9, ..Default::default() };
        let clean = puzzle_mix(&x0, &x1, &s0, &s1, &cfg).unwrap();
        let off = AdvConfig { p: 0.0, ..Default::default() };
        let (r, t) = adversarial_mix(&x0, &x1, &g0, &g1, &s0, &s1, &cfg, &off).unwrap();
        assert_eq!(r, clean);
        assert_eq!(t.perturbed, [false, false]);
        let zero_ball = AdvConfig { p: 1.0, epsilon: 0.0, ..Default::default() };
        let (r, t) = adversarial_mix(&x0, &x1, &g0, &g1, &s0, &s1, &cfg, &zero_ball).unwrap();
        assert_eq!(r, clean);
        assert_eq!(t.perturbed, [true, true]);
    }

    #[test]
    fn double_step_saturates_the_ball() {
        let (x0, x1, s0, s1) = pair(4);
        let (g0, g1) = (gradient(5), gradient(6));
        let eps = 10.0 / 255.0;
        let adv = AdvConfig { p: 1.0, epsilon: eps, tau: 2.0 * eps, seed: 3 };
        let (r, t) = adversarial_mix(&x0, &x1, &g0, &g1, &s0, &s1, &MixConfig::default(), &adv).unwrap();
        for (kappa, g) in t.kappa.iter().zip([&g0, &g1]) {
            for (k, gv) in kappa.as_ref().unwrap().iter().zip(g.data()) {
                if *gv != 0.0 {
                    assert_eq!(k.abs(), eps);
                    assert_eq!(k.signum(), gv.signum());
                } else {
                    assert!(k.abs() <= eps);
                }
            }
        }
        assert!((0.0..1.0).contains(&t.delta));
        assert!(r.mixed.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn gradient_shape_is_checked() {
        let (x0, x1, s0, s1) = pair(7);
        let bad = FloatTensor::new(vec![32, 32], vec![0.0; 1024]).unwrap();
        let r = adversarial_mix(&x0, &x1, &bad, &bad, &s0, &s1, &MixConfig::default(), &AdvConfig::default());
        assert!(matches!(r, Err(Error::Shape(_))));
    }

    #[test]
    fn prior_picks_the_binomial_mode() {
        let (x0, x1, _, _) = pair(8);
        let flat = FloatTensor::new(vec![32, 32], vec![1.0; 1024]).unwrap();
        for (lambda, mode) in [(0.1, 0), (0.5, 1), (0.9, 2)] {
            let cfg = MixConfig {
                lambda: Some(lambda),
                params: EnergyParams { beta: 0.0, gamma: 0.0, eta: 0.2, ..Default::default() },
                ..Default::default()
            };
            let r = puzzle_mix(&x0, &x1, &flat, &flat, &cfg).unwrap();
            assert!(r.mask.levels().iter().all(|&t| t == mode), "lambda {lambda}");
        }
    }

    #[test]
    fn metadata_serializes_with_schema() {
        let (x0, x1, s0, s1) = pair(9);
        let cfg = MixConfig::default();
        let r = puzzle_mix(&x0, &x1, &s0, &s1, &cfg).unwrap();
        let json = serde_json::to_value(r.metadata(&cfg)).unwrap();
        assert_eq!(json["schema"], 1);
        assert_eq!(json["mask"].as_array().unwrap().len(), r.grid.len());
        assert!(json.get("adversarial").is_none());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]

        #[test]
        fn identity_plan_mix_is_pixelwise_convex(seed in 0u64..1000, lambda in 0.0f64..=1.0) {
            let (x0, x1, s0, s1) = pair(seed);
            let cfg = MixConfig { seed, lambda: Some(lambda), transport_enabled: false, ..Default::default() };
            let r = puzzle_mix(&x0, &x1, &s0, &s1, &cfg).unwrap();
            for ((h, a), b) in r.mixed.data().iter().zip(x0.data()).zip(x1.data()) {
                proptest::prop_assert!(*h >= a.min(*b) && *h <= a.max(*b));
            }
            proptest::prop_assert_eq!(r.lambda_effective, r.mask.mean());
            proptest::prop_assert!((0.0..=1.0).contains(&r.lambda_effective));
        }

        #[test]
        fn mixing_is_deterministic(seed in 0u64..1000) {
            let (x0, x1, s0, s1) = pair(seed);
            let cfg = MixConfig { seed, ..Default::default() };
            let a = puzzle_mix(&x0, &x1, &s0, &s1, &cfg).unwrap();
            let b = puzzle_mix(&x0, &x1, &s0, &s1, &cfg).unwrap();
            proptest::prop_assert_eq!(&a, &b);
            proptest::prop_assert!(a.mixed.data().iter().all(|v| (0.0..=1.0).contains(v)));
            proptest::prop_assert!(a.plan0.is_permutation() && a.plan1.is_permutation());
        }
    }
}
