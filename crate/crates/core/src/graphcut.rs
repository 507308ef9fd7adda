//! Multi-label mask optimization by α-β swap.
//!
//! Each move fixes every region whose label is neither α nor β, then lets the
//! remaining regions choose between α and β. That binary problem is solved
//! exactly as an s-t minimum cut because the pairwise terms are submodular.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::energy::{energy_of_levels, EnergyInstance, Mask};
use crate::error::{Error, Result};

/// Residual capacities at or below this are treated as saturated.
const FLOW_EPS: f64 = 1e-12;

/// Moves must lower the energy by more than this to be accepted.
pub const STRICT_DECREASE_TOL: f64 = 1e-12;

pub const DEFAULT_MAX_SWEEPS: usize = 50;

#[derive(Debug, Clone)]
struct FlowEdge {
    to: usize,
    cap: f64,
}

/// Directed capacitated graph with Dinic's max-flow.
#[derive(Debug, Clone)]
pub struct FlowNetwork {
    edges: Vec<FlowEdge>,
    adj: Vec<Vec<usize>>,
    level: Vec<i32>,
    iter: Vec<usize>,
}

impl FlowNetwork {
    pub fn new(nodes: usize) -> Self {
        Self {
            edges: Vec::new(),
            adj: vec![Vec::new(); nodes],
            level: vec![-1; nodes],
            iter: vec![0; nodes],
        }
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn add_edge(&mut self, from: usize, to: usize, cap: f64) {
        debug_assert!(cap >= 0.0, "negative capacity {cap}");
        if cap <= 0.0 {
            return;
        }
        self.adj[from].push(self.edges.len());
        self.edges.push(FlowEdge { to, cap });
        self.adj[to].push(self.edges.len());
        self.edges.push(FlowEdge { to: from, cap: 0.0 });
    }

    fn bfs(&mut self, s: usize, t: usize) -> bool {
        self.level.iter_mut().for_each(|l| *l = -1);
        self.level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            for &e in &self.adj[v] {
                let FlowEdge { to, cap } = self.edges[e];
                if cap > FLOW_EPS && self.level[to] < 0 {
                    self.level[to] = self.level[v] + 1;
                    queue.push_back(to);
                }
            }
        }
        self.level[t] >= 0
    }

    fn dfs(&mut self, v: usize, t: usize, pushed: f64) -> f64 {
        if v == t {
            return pushed;
        }
        while self.iter[v] < self.adj[v].len() {
            let e = self.adj[v][self.iter[v]];
            let FlowEdge { to, cap } = self.edges[e];
            if cap > FLOW_EPS && self.level[to] == self.level[v] + 1 {
                let d = self.dfs(to, t, pushed.min(cap));
                if d > 0.0 {
                    self.edges[e].cap -= d;
                    self.edges[e ^ 1].cap += d;
                    return d;
                }
            }
            self.iter[v] += 1;
        }
        0.0
    }

    pub fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let mut flow = 0.0;
        while self.bfs(s, t) {
            self.iter.iter_mut().for_each(|i| *i = 0);
            loop {
                let f = self.dfs(s, t, f64::INFINITY);
                if f <= 0.0 {
                    break;
                }
                flow += f;
            }
        }
        flow
    }

    /// Nodes reachable from `s` in the residual graph (call after `max_flow`).
    pub fn source_side(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.adj.len()];
        seen[s] = true;
        let mut stack = vec![s];
        while let Some(v) = stack.pop() {
            for &e in &self.adj[v] {
                let FlowEdge { to, cap } = self.edges[e];
                if cap > FLOW_EPS && !seen[to] {
                    seen[to] = true;
                    stack.push(to);
                }
            }
        }
        seen
    }
}

/// Two-label problem over the regions currently labeled α or β.
///
/// Variable `x = 0` keeps label `alpha`, `x = 1` takes label `beta_label`.
/// Pairwise terms to frozen neighbors are folded into the unaries, and the
/// energy of the frozen part is carried in `offset`.
#[derive(Debug, Clone)]
pub struct SwapSubproblem {
    pub alpha: usize,
    pub beta_label: usize,
    /// Region index of each variable.
    pub active: Vec<usize>,
    /// `[cost(x = 0), cost(x = 1)]` per variable.
    pub unary: Vec<[f64; 2]>,
    /// `(a, b, [E00, E01, E10, E11])` over variable indices.
    pub pairwise: Vec<(usize, usize, [f64; 4])>,
    pub offset: f64,
}

impl SwapSubproblem {
    pub fn build(inst: &EnergyInstance, levels: &[usize], alpha: usize, beta_label: usize) -> Self {
        let n = levels.len();
        let mut var = vec![usize::MAX; n];
        let mut active = Vec::new();
        for (i, &t) in levels.iter().enumerate() {
            if t == alpha || t == beta_label {
                var[i] = active.len();
                active.push(i);
            }
        }
        let mut unary: Vec<[f64; 2]> = active
            .iter()
            .map(|&i| [inst.node_cost(i, alpha), inst.node_cost(i, beta_label)])
            .collect();
        let mut offset: f64 = levels
            .iter()
            .enumerate()
            .filter(|&(i, _)| var[i] == usize::MAX)
            .map(|(i, &t)| inst.node_cost(i, t))
            .sum();
        let labels = [alpha, beta_label];
        let mut pairwise = Vec::new();
        for (k, &(i, j)) in inst.neighbors().iter().enumerate() {
            match (var[i] != usize::MAX, var[j] != usize::MAX) {
                (true, true) => {
                    let mut table = [0.0; 4];
                    for a in 0..2 {
                        for b in 0..2 {
                            table[2 * a + b] = inst.edge_cost(k, labels[a], labels[b]);
                        }
                    }
                    pairwise.push((var[i], var[j], table));
                }
                (true, false) => {
                    for a in 0..2 {
                        unary[var[i]][a] += inst.edge_cost(k, labels[a], levels[j]);
                    }
                }
                (false, true) => {
                    for b in 0..2 {
                        unary[var[j]][b] += inst.edge_cost(k, levels[i], labels[b]);
                    }
                }
                (false, false) => offset += inst.edge_cost(k, levels[i], levels[j]),
            }
        }
        Self {
            alpha,
            beta_label,
            active,
            unary,
            pairwise,
            offset,
        }
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    /// Energy of a binary assignment, including `offset`.
    pub fn energy(&self, x: &[bool]) -> f64 {
        let mut e = self.offset;
        for (u, &b) in self.unary.iter().zip(x) {
            e += u[b as usize];
        }
        for &(a, b, ref t) in &self.pairwise {
            e += t[2 * x[a] as usize + x[b] as usize];
        }
        e
    }

    pub fn check_submodular(&self) -> Result<()> {
        for &(a, b, [e00, e01, e10, e11]) in &self.pairwise {
            let excess = (e00 + e11) - (e01 + e10);
            let scale = 1.0 + e00.abs() + e01.abs() + e10.abs() + e11.abs();
            if excess > 1e-12 * scale {
                return Err(Error::SubmodularityViolation {
                    i: self.active[a],
                    j: self.active[b],
                    excess,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinCut {
    /// `true` where the variable takes `beta_label`.
    pub assignment: Vec<bool>,
    /// Energy of `assignment`, evaluated term by term.
    pub energy: f64,
    /// Minimum-cut value plus the constant collected during reduction.
    pub cut_energy: f64,
}

/// Exact minimizer of a submodular binary subproblem.
pub fn min_cut_binary(sub: &SwapSubproblem) -> Result<MinCut> {
    sub.check_submodular()?;
    let k = sub.len();
    let (source, sink) = (k, k + 1);
    let mut net = FlowNetwork::new(k + 2);
    let cost0: Vec<f64> = sub.unary.iter().map(|u| u[0]).collect();
    let mut cost1: Vec<f64> = sub.unary.iter().map(|u| u[1]).collect();
    let mut constant = sub.offset;

    // E(xa, xb) = A + (C − A)·xa + (D − C)·xb + (B + C − A − D)·(1 − xa)·xb
    for &(a, b, [ea, eb, ec, ed]) in &sub.pairwise {
        constant += ea;
        cost1[a] += ec - ea;
        cost1[b] += ed - ec;
        let w = (eb + ec - ea - ed).max(0.0);
        net.add_edge(a, b, w);
    }
    for v in 0..k {
        let lo = cost0[v].min(cost1[v]);
        constant += lo;
        // x = 1 is the sink side, so its cost sits on the source edge
        net.add_edge(source, v, cost1[v] - lo);
        net.add_edge(v, sink, cost0[v] - lo);
    }
    let flow = net.max_flow(source, sink);
    let side = net.source_side(source);
    let assignment: Vec<bool> = (0..k).map(|v| !side[v]).collect();
    Ok(MinCut {
        energy: sub.energy(&assignment),
        cut_energy: constant + flow,
        assignment,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SwapOptions {
    pub max_sweeps: usize,
}

impl Default for SwapOptions {
    fn default() -> Self {
        Self {
            max_sweeps: DEFAULT_MAX_SWEEPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapOutcome {
    pub mask: Mask,
    pub energy: f64,
    pub initial_energy: f64,
    /// Energy after each accepted move.
    pub accepted: Vec<f64>,
    pub sweeps: usize,
    /// `false` if the sweep cap was hit before a quiet sweep.
    pub converged: bool,
}

/// Mask with every region at the label nearest to the prior weight.
pub fn initial_mask(inst: &EnergyInstance) -> Result<Mask> {
    let space = inst.space();
    Mask::constant(inst.grid(), space, space.nearest(inst.params().lambda))
}

/// Runs swap sweeps over label pairs `(t₁ < t₂)` in lexicographic order until a
/// sweep accepts no move or `max_sweeps` is reached.
pub fn alpha_beta_swap(inst: &EnergyInstance, init: &Mask, opts: SwapOptions) -> Result<SwapOutcome> {
    inst.check_mask(init)?;
    let labels = inst.space().count();
    let mut levels = init.levels().to_vec();
    let initial_energy = energy_of_levels(&levels, inst);
    let mut energy = initial_energy;
    let mut accepted = Vec::new();
    let mut sweeps = 0;
    let mut converged = false;

    while sweeps < opts.max_sweeps {
        sweeps += 1;
        let mut moved = false;
        for alpha in 0..labels {
            for beta_label in alpha + 1..labels {
                let sub = SwapSubproblem::build(inst, &levels, alpha, beta_label);
                if sub.is_empty() {
                    continue;
                }
                let cut = min_cut_binary(&sub)?;
                let mut candidate = levels.clone();
                for (&region, &take_beta) in sub.active.iter().zip(&cut.assignment) {
                    candidate[region] = if take_beta { beta_label } else { alpha };
                }
                let e = energy_of_levels(&candidate, inst);
                if e < energy - STRICT_DECREASE_TOL {
                    levels = candidate;
                    energy = e;
                    accepted.push(e);
                    moved = true;
                }
            }
        }
        if !moved {
            converged = true;
            break;
        }
    }

    Ok(SwapOutcome {
        mask: Mask::from_levels(inst.grid(), inst.space(), levels)?,
        energy,
        initial_energy,
        accepted,
        sweeps,
        converged,
    })
}
