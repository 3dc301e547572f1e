//! Best-bound-first branch-and-bound over the interval grid.
//!
//! A node is a box of grid cells, optionally narrowed to a continuous
//! sub-region of a single cell (explore mode only). Its lower bound is the
//! sum of a prediction bound and an uncertainty bound:
//!
//! - prediction: per-tree minima over reachable leaves, optionally tightened
//!   by grouped exact minima ([`GriddedEnsemble::partition_refine_bound`]);
//! - uncertainty, penalty modes: `κ · min_r min_{x∈S} dist(x, r)`, computed
//!   through the clamped projection of each reference onto the box;
//! - uncertainty, explore mode: `−κ · min(α_limit, min_r max_{x∈S} dist(x, r))`.
//!
//! In penalty modes the bound of a single cell is exact, so the search never
//! goes below cell granularity. In explore mode cells are bisected along
//! their longest standardized side until bound and incumbent meet.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::problem::{AcquisitionProblem, Mode};
use crate::tree::{CellBox, GriddedEnsemble, Node, DEFAULT_REFINE_BUDGET};
use crate::uncertainty::{max_dist_to_zbox, min_dist_to_zbox};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Relative optimality gap `(ub − lb) / max(1, |ub|)` at which to stop.
    pub rel_gap: f64,
    /// Wall-clock limit in seconds.
    pub time_limit: f64,
    /// Number of candidate splits scored per node.
    pub lookahead: usize,
    /// Trees per group for the refined prediction bound; 1 disables refinement.
    pub group_size: usize,
    /// Search-node cap per tree group when refining.
    pub refine_budget: usize,
    /// Optional cap on explored nodes.
    pub max_nodes: Option<u64>,
    /// Explore-mode regions whose longest standardized side falls below this
    /// are no longer bisected; their bound stays in the reported lower bound.
    pub min_width: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rel_gap: 1e-4,
            time_limit: 120.0,
            lookahead: 200,
            group_size: 20,
            refine_budget: DEFAULT_REFINE_BUDGET,
            max_nodes: None,
            min_width: 1e-9,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_gap > 0.0) {
            return Err(Error::invalid("rel_gap must be positive"));
        }
        if !(self.time_limit > 0.0) {
            return Err(Error::invalid("time_limit must be positive"));
        }
        if self.lookahead == 0 {
            return Err(Error::invalid("lookahead must be at least 1"));
        }
        if self.group_size == 0 {
            return Err(Error::invalid("group_size must be at least 1"));
        }
        if self.refine_budget == 0 {
            return Err(Error::invalid("refine_budget must be at least 1"));
        }
        if !(self.min_width > 0.0) {
            return Err(Error::invalid("min_width must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Gap,
    Time,
    NodeLimit,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Termination::Gap => "gap",
            Termination::Time => "time",
            Termination::NodeLimit => "node-limit",
        })
    }
}

/// Snapshot of the search progress.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub nodes: u64,
    pub upper_bound: f64,
    pub lower_bound: f64,
    pub rel_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub x_next: Vec<f64>,
    pub upper_bound: f64,
    pub lower_bound: f64,
    pub rel_gap: f64,
    pub nodes_explored: u64,
    pub wall_time: f64,
    pub termination: Termination,
    pub warm_start_value: f64,
    pub history: Vec<GapRecord>,
}

pub fn relative_gap(upper: f64, lower: f64) -> f64 {
    (upper - lower).max(0.0) / upper.abs().max(1.0)
}

/// A branch-and-bound node.
#[derive(Debug, Clone, PartialEq)]
pub struct BnBNode {
    pub cells: CellBox,
    /// Continuous sub-region of a single cell, when narrowed below cell size.
    pub region: Option<Vec<(f64, f64)>>,
    pub lower_bound: f64,
    pub depth: usize,
    pub creation_index: u64,
    tree_mins: Vec<f64>,
}

impl BnBNode {
    /// Builds a node and computes its cheap lower bound (per-tree minima plus
    /// the uncertainty bound).
    pub fn new(problem: &AcquisitionProblem, cells: CellBox, region: Option<Vec<(f64, f64)>>) -> Result<Self> {
        problem.model.grid().check_box(&cells)?;
        if let Some(r) = &region {
            if !cells.is_cell() || r.len() != problem.dim() {
                return Err(Error::invalid("a continuous region requires a single-cell box"));
            }
        }
        let tree_mins = problem.model.tree_minima(&cells);
        let cfg = SolverConfig::default();
        let bounder = Bounder::new(problem, &cfg);
        let lower_bound = bounder.cheap_bound(&cells, region.as_deref(), &tree_mins);
        Ok(BnBNode {
            cells,
            region,
            lower_bound,
            depth: 0,
            creation_index: 0,
            tree_mins,
        })
    }

    pub fn root(problem: &AcquisitionProblem) -> Self {
        Self::new(problem, problem.model.grid().full_box(), None).expect("full box is valid")
    }
}

struct Queued(BnBNode);

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    /// Max-heap order: smallest bound first, then shallower, then older.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .lower_bound
            .total_cmp(&self.0.lower_bound)
            .then_with(|| other.0.depth.cmp(&self.0.depth))
            .then_with(|| other.0.creation_index.cmp(&self.0.creation_index))
    }
}

/// How to split a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Branch {
    /// Split at grid line `line` of dimension `dim`.
    Grid { dim: usize, line: usize },
    /// Bisect a single cell's continuous region at `at` in dimension `dim`.
    Bisect { dim: usize, at: f64 },
}

struct Child {
    cells: CellBox,
    region: Option<Vec<(f64, f64)>>,
    tree_mins: Vec<f64>,
    bound: f64,
}

struct Choice {
    branch: Branch,
    children: [Child; 2],
}

struct Bounder<'a> {
    p: &'a AcquisitionProblem,
    cfg: &'a SolverConfig,
    /// Trees that split on each feature.
    by_feature: Vec<Vec<usize>>,
}

impl<'a> Bounder<'a> {
    fn new(p: &'a AcquisitionProblem, cfg: &'a SolverConfig) -> Self {
        let mut by_feature = vec![Vec::new(); p.dim()];
        for (t, tree) in p.model.ensemble().trees.iter().enumerate() {
            let mut seen = vec![false; p.dim()];
            for node in &tree.nodes {
                if let Node::Split { feature, .. } = *node {
                    if !std::mem::replace(&mut seen[feature], true) {
                        by_feature[feature].push(t);
                    }
                }
            }
        }
        Bounder { p, cfg, by_feature }
    }

    fn model(&self) -> &GriddedEnsemble {
        &self.p.model
    }

    fn extents(&self, cells: &CellBox, region: Option<&[(f64, f64)]>) -> Vec<(f64, f64)> {
        match region {
            Some(r) => r.to_vec(),
            None => self.model().grid().extents(cells),
        }
    }

    /// Bound on the uncertainty term over the region and the reference
    /// attaining it.
    fn alpha_part(&self, ext: &[(f64, f64)]) -> (f64, usize) {
        let zbox = self.p.std.standardize_box(ext);
        let dist = |r: &Vec<f64>| match self.p.mode {
            Mode::Explore => max_dist_to_zbox(r, &zbox, self.p.metric),
            _ => min_dist_to_zbox(r, &zbox, self.p.metric),
        };
        let mut best = (f64::INFINITY, 0);
        for (i, r) in self.p.refs.points.iter().enumerate() {
            let d = dist(r);
            if d < best.0 {
                best = (d, i);
            }
        }
        if self.p.mode == Mode::Explore {
            best.0 = best.0.min(self.p.alpha_limit);
        }
        best
    }

    fn mu_from_mins(&self, mins: &[f64]) -> f64 {
        mins.iter().fold(self.model().base_offset(), |acc, m| acc + m)
    }

    fn cheap_bound(&self, cells: &CellBox, region: Option<&[(f64, f64)]>, mins: &[f64]) -> f64 {
        let mu = self.mu_from_mins(mins);
        if self.p.kappa == 0.0 {
            return mu;
        }
        let (alpha, _) = self.alpha_part(&self.extents(cells, region));
        self.p.combine(mu, alpha)
    }

    /// Tightens a bound with the grouped prediction bound.
    fn refine(&self, child: &Child) -> f64 {
        if self.cfg.group_size <= 1 || child.cells.is_cell() {
            return child.bound;
        }
        let mu = self
            .model()
            .partition_refine_bound(&child.cells, self.cfg.group_size, self.cfg.refine_budget);
        let refined = if self.p.kappa == 0.0 {
            mu
        } else {
            let (alpha, _) = self.alpha_part(&self.extents(&child.cells, None));
            self.p.combine(mu, alpha)
        };
        child.bound.max(refined)
    }

    /// Node bound as used by the search: cheap bound, then refinement.
    fn full_bound(&self, cells: &CellBox, region: Option<&[(f64, f64)]>, mins: &[f64]) -> f64 {
        let child = Child {
            cells: cells.clone(),
            region: region.map(<[_]>::to_vec),
            tree_mins: mins.to_vec(),
            bound: self.cheap_bound(cells, region, mins),
        };
        self.refine(&child)
    }

    /// Whether the node's bound equals its true minimum.
    fn is_exact(&self, node: &BnBNode) -> bool {
        node.cells.is_cell()
            && (self.p.mode.is_penalty() || self.p.kappa == 0.0 || self.p.alpha_limit == 0.0)
    }

    /// Grid split candidates, median-outward within each dimension and
    /// interleaved across dimensions, truncated to `lookahead`.
    fn candidates(&self, cells: &CellBox, lookahead: usize) -> Vec<(usize, usize)> {
        let per_dim: Vec<Vec<usize>> = (0..cells.lo.len())
            .map(|d| {
                let (first, last) = (cells.lo[d] + 1, cells.hi[d]);
                if first > last {
                    return Vec::new();
                }
                let mid = first + (last - first) / 2;
                let mut order = Vec::with_capacity(last - first + 1);
                order.push(mid);
                let mut step = 1;
                while order.len() < last - first + 1 {
                    if mid + step <= last {
                        order.push(mid + step);
                    }
                    if mid >= first + step {
                        order.push(mid - step);
                    }
                    step += 1;
                }
                order
            })
            .collect();
        let longest = per_dim.iter().map(Vec::len).max().unwrap_or(0);
        let mut out = Vec::new();
        'outer: for rank in 0..longest {
            for (d, lines) in per_dim.iter().enumerate() {
                if let Some(&j) = lines.get(rank) {
                    out.push((d, j));
                    if out.len() == lookahead {
                        break 'outer;
                    }
                }
            }
        }
        out
    }

    fn child_mins(&self, node: &BnBNode, dim: usize, cells: &CellBox) -> Vec<f64> {
        let mut mins = node.tree_mins.clone();
        for &t in &self.by_feature[dim] {
            mins[t] = self.model().tree_min(t, cells).1;
        }
        mins
    }

    fn grid_child(&self, node: &BnBNode, dim: usize, cells: CellBox) -> Child {
        let mins = self.child_mins(node, dim, &cells);
        let bound = self.cheap_bound(&cells, None, &mins).max(node.lower_bound);
        Child {
            cells,
            region: None,
            tree_mins: mins,
            bound,
        }
    }

    fn choose(&self, node: &BnBNode, lookahead: usize) -> Option<Choice> {
        if !node.cells.is_cell() {
            // Candidates are scored with incrementally updated distance
            // terms; the winner's children get their bounds recomputed.
            let terms = (self.p.kappa != 0.0).then(|| AlphaTerms::new(self.p, &self.extents(&node.cells, None)));
            let node_mu = self.mu_from_mins(&node.tree_mins);
            let score_child = |dim: usize, cells: &mut CellBox| -> f64 {
                let mu = self.by_feature[dim].iter().fold(node_mu, |acc, &t| {
                    acc + (self.model().tree_min_in(t, cells).1 - node.tree_mins[t])
                });
                let bound = match &terms {
                    None => mu,
                    Some(t) => {
                        let (lo, hi) = self.model().grid().extent(cells, dim);
                        self.p.combine(mu, t.alpha_with(self.p, dim, lo, hi))
                    }
                };
                bound.max(node.lower_bound)
            };
            let mut best: Option<((f64, f64), (usize, usize))> = None;
            for (dim, line) in self.candidates(&node.cells, lookahead) {
                let (mut l, mut r) = node.cells.split(dim, line);
                let (a, b) = (score_child(dim, &mut l), score_child(dim, &mut r));
                let score = (a.min(b), a.max(b));
                let better = match &best {
                    None => true,
                    Some((s, key)) => match score.0.total_cmp(&s.0).then(score.1.total_cmp(&s.1)) {
                        Ordering::Greater => true,
                        Ordering::Less => false,
                        Ordering::Equal => (dim, line) < *key,
                    },
                };
                if better {
                    best = Some((score, (dim, line)));
                }
            }
            return best.map(|(_, (dim, line))| {
                let (l, r) = node.cells.split(dim, line);
                Choice {
                    branch: Branch::Grid { dim, line },
                    children: [self.grid_child(node, dim, l), self.grid_child(node, dim, r)],
                }
            });
        }
        if self.is_exact(node) {
            return None;
        }
        let ext = self.extents(&node.cells, node.region.as_deref());
        let std = &self.p.std.std;
        let (dim, width) = ext
            .iter()
            .enumerate()
            .map(|(i, &(lo, hi))| (i, (hi - lo) / std[i]))
            .fold((0, f64::NEG_INFINITY), |acc, (i, w)| if w > acc.1 { (i, w) } else { acc });
        if width < self.cfg.min_width {
            return None;
        }
        let (lo, hi) = ext[dim];
        let at = lo + 0.5 * (hi - lo);
        if !(at > lo && at < hi) {
            return None;
        }
        let mut left_ext = ext.clone();
        let mut right_ext = ext;
        left_ext[dim].1 = at;
        right_ext[dim].0 = at;
        let make = |e: Vec<(f64, f64)>| {
            let bound = self
                .cheap_bound(&node.cells, Some(&e), &node.tree_mins)
                .max(node.lower_bound);
            Child {
                cells: node.cells.clone(),
                region: Some(e),
                tree_mins: node.tree_mins.clone(),
                bound,
            }
        };
        Some(Choice {
            branch: Branch::Bisect { dim, at },
            children: [make(left_ext), make(right_ext)],
        })
    }

    /// Feasible points worth evaluating inside the node.
    fn probe_points(&self, node: &BnBNode) -> Vec<Vec<f64>> {
        let ext = self.extents(&node.cells, node.region.as_deref());
        let zbox = self.p.std.standardize_box(&ext);
        let (_, r) = self.alpha_part(&ext);
        let reference = &self.p.refs.points[r];
        let mut points = Vec::with_capacity(2);
        match self.p.mode {
            Mode::Explore => {
                points.push(ext.iter().map(|&(lo, hi)| lo + 0.5 * (hi - lo)).collect());
                // Corner farthest from the reference that limits the bound.
                let corner: Vec<f64> = reference
                    .iter()
                    .zip(&zbox)
                    .map(|(&z, &(lo, hi))| if (hi - z).abs() >= (z - lo).abs() { hi } else { lo })
                    .collect();
                points.push(self.p.std.destandardize(&corner));
            }
            _ => {
                let proj: Vec<f64> = reference
                    .iter()
                    .zip(&zbox)
                    .map(|(&z, &(lo, hi))| z.clamp(lo, hi))
                    .collect();
                points.push(self.p.std.destandardize(&proj));
            }
        }
        for p in &mut points {
            self.place_inside(p, &ext);
        }
        points
    }

    /// Moves `x` into the half-open region: lower faces are open except at
    /// the domain's lower bound.
    fn place_inside(&self, x: &mut [f64], ext: &[(f64, f64)]) {
        for (i, (v, &(lo, hi))) in x.iter_mut().zip(ext).enumerate() {
            *v = v.clamp(lo, hi);
            if *v <= lo && lo > self.model().grid().dims[i].lower {
                *v = lo.next_up().min(hi);
            }
        }
    }
}

/// Per-reference, per-dimension distance terms over a region, so that the
/// uncertainty bound of a box differing in one dimension costs one term per
/// reference.
struct AlphaTerms {
    n: usize,
    terms: Vec<f64>,
    totals: Vec<f64>,
}

impl AlphaTerms {
    fn term(p: &AcquisitionProblem, r: f64, lo: f64, hi: f64) -> f64 {
        let dev = match p.mode {
            Mode::Explore => (hi - r).abs().max((r - lo).abs()),
            _ if r < lo => lo - r,
            _ if r > hi => r - hi,
            _ => 0.0,
        };
        p.metric.aggregate([dev])
    }

    fn new(p: &AcquisitionProblem, ext: &[(f64, f64)]) -> Self {
        let zbox = p.std.standardize_box(ext);
        let n = zbox.len();
        let mut terms = Vec::with_capacity(n * p.refs.len());
        let mut totals = Vec::with_capacity(p.refs.len());
        for r in &p.refs.points {
            let row: Vec<f64> = r.iter().zip(&zbox).map(|(&z, &(lo, hi))| Self::term(p, z, lo, hi)).collect();
            totals.push(row.iter().sum());
            terms.extend(row);
        }
        AlphaTerms { n, terms, totals }
    }

    /// Uncertainty bound after replacing dimension `dim` by raw `[lo, hi]`.
    fn alpha_with(&self, p: &AcquisitionProblem, dim: usize, lo: f64, hi: f64) -> f64 {
        let (zlo, zhi) = (p.std.standardize_coord(dim, lo), p.std.standardize_coord(dim, hi));
        let best = p
            .refs
            .points
            .iter()
            .enumerate()
            .map(|(i, r)| self.totals[i] - self.terms[i * self.n + dim] + Self::term(p, r[dim], zlo, zhi))
            .fold(f64::INFINITY, f64::min);
        match p.mode {
            Mode::Explore => best.min(p.alpha_limit),
            _ => best.max(0.0),
        }
    }
}

/// Lower bound of the acquisition over a box (or a sub-region of a single
/// cell), using the refinement settings of `config`.
pub fn node_lower_bound(
    problem: &AcquisitionProblem,
    cells: &CellBox,
    region: Option<&[(f64, f64)]>,
    config: &SolverConfig,
) -> f64 {
    let bounder = Bounder::new(problem, config);
    let mins = problem.model.tree_minima(cells);
    bounder.full_bound(cells, region, &mins)
}

/// Chooses how to split `node` by scoring up to `lookahead` candidates on the
/// bounds of their two children: the smaller child bound first, then the
/// larger one, then the lower dimension and grid line.
pub fn select_branch(problem: &AcquisitionProblem, node: &BnBNode, lookahead: usize) -> Result<Branch> {
    let cfg = SolverConfig::default();
    let bounder = Bounder::new(problem, &cfg);
    bounder
        .choose(node, lookahead.max(1))
        .map(|c| c.branch)
        .ok_or_else(|| Error::invalid("node cannot be split"))
}

/// Initial incumbent. Penalty modes take the reference point with the best
/// prediction, whose uncertainty term vanishes. Explore mode takes the best
/// of the references, domain corners and seeded random points.
pub fn warm_start(problem: &AcquisitionProblem, seed: u64) -> (Vec<f64>, f64) {
    let bounds = problem.bounds();
    let clamp = |x: Vec<f64>| -> Vec<f64> {
        x.into_iter()
            .zip(&bounds)
            .map(|(v, &(lo, hi))| v.clamp(lo, hi))
            .collect()
    };
    let mut candidates: Vec<Vec<f64>> = problem
        .refs
        .points
        .iter()
        .map(|r| clamp(problem.std.destandardize(r)))
        .collect();
    if problem.mode == Mode::Explore {
        let n = problem.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let corner = |mask: u64| -> Vec<f64> {
            bounds
                .iter()
                .enumerate()
                .map(|(i, &(lo, hi))| if mask >> i & 1 == 1 { hi } else { lo })
                .collect()
        };
        if n <= 6 {
            candidates.extend((0..1u64 << n).map(corner));
        } else {
            for _ in 0..64 {
                let c: Vec<f64> = bounds
                    .iter()
                    .map(|&(lo, hi)| if rng.gen_bool(0.5) { hi } else { lo })
                    .collect();
                candidates.push(c);
            }
        }
        for _ in 0..64 {
            candidates.push(bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect());
        }
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    for x in candidates {
        let v = problem.evaluate_unchecked(&x);
        if best.as_ref().map_or(true, |(_, b)| v < *b) {
            best = Some((x, v));
        }
    }
    best.expect("reference set is never empty")
}

/// Minimizes the acquisition function to the configured relative gap.
pub fn solve(problem: &AcquisitionProblem, config: &SolverConfig) -> Result<SolveResult> {
    config.validate()?;
    let start = Instant::now();
    let bounder = Bounder::new(problem, config);

    let (mut x_best, mut ub) = warm_start(problem, config.seed);
    let warm_start_value = ub;

    let root_cells = problem.model.grid().full_box();
    let root_mins = problem.model.tree_minima(&root_cells);
    let root_bound = bounder.full_bound(&root_cells, None, &root_mins);
    let mut heap = BinaryHeap::new();
    let mut created: u64 = 1;
    if root_bound < ub {
        heap.push(Queued(BnBNode {
            cells: root_cells,
            region: None,
            lower_bound: root_bound,
            depth: 0,
            creation_index: 0,
            tree_mins: root_mins,
        }));
    }

    // Bounds of regions too small to split further; they stay in the lower bound.
    let mut unresolved = f64::INFINITY;
    let mut nodes: u64 = 0;
    let mut history = Vec::new();
    let mut lb_reported = f64::NEG_INFINITY;

    let current_lb = |heap: &BinaryHeap<Queued>, ub: f64, unresolved: f64| -> f64 {
        let open = heap.peek().map_or(ub, |q| q.0.lower_bound.min(ub));
        open.min(unresolved)
    };

    let termination = loop {
        let lb = current_lb(&heap, ub, unresolved).max(lb_reported);
        let gap_changed = lb != lb_reported;
        lb_reported = lb;
        let gap = relative_gap(ub, lb);
        if history.is_empty() || (gap_changed && nodes % 64 == 0) {
            history.push(GapRecord {
                nodes,
                upper_bound: ub,
                lower_bound: lb,
                rel_gap: gap,
            });
        }
        if gap <= config.rel_gap {
            break Termination::Gap;
        }
        if heap.is_empty() {
            // Only unresolved regions remain and they cannot close the gap.
            break Termination::Gap;
        }
        if config.max_nodes.is_some_and(|m| nodes >= m) {
            break Termination::NodeLimit;
        }
        if start.elapsed().as_secs_f64() >= config.time_limit {
            break Termination::Time;
        }

        let Queued(node) = heap.pop().expect("heap is non-empty");
        if node.lower_bound >= ub {
            continue;
        }
        nodes += 1;

        let mut improved = false;
        for x in bounder.probe_points(&node) {
            let v = problem.evaluate_unchecked(&x);
            if v < ub {
                ub = v;
                x_best = x;
                improved = true;
            }
        }
        if improved {
            history.push(GapRecord {
                nodes,
                upper_bound: ub,
                lower_bound: lb_reported.min(ub),
                rel_gap: relative_gap(ub, lb_reported.min(ub)),
            });
        }

        if bounder.is_exact(&node) {
            continue;
        }
        let Some(choice) = bounder.choose(&node, config.lookahead) else {
            unresolved = unresolved.min(node.lower_bound);
            continue;
        };
        for mut child in choice.children {
            if child.bound >= ub {
                continue;
            }
            child.bound = bounder.refine(&child);
            if child.bound >= ub {
                continue;
            }
            heap.push(Queued(BnBNode {
                cells: child.cells,
                region: child.region,
                lower_bound: child.bound,
                depth: node.depth + 1,
                creation_index: created,
                tree_mins: child.tree_mins,
            }));
            created += 1;
        }
    };

    let lower_bound = lb_reported.min(ub);
    let rel_gap = relative_gap(ub, lower_bound);
    history.push(GapRecord {
        nodes,
        upper_bound: ub,
        lower_bound,
        rel_gap,
    });
    Ok(SolveResult {
        x_next: x_best,
        upper_bound: ub,
        lower_bound,
        rel_gap,
        nodes_explored: nodes,
        wall_time: start.elapsed().as_secs_f64(),
        termination,
        warm_start_value,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::testing::random_ensemble;
    use crate::tree::{Tree, TreeEnsemble};
    use crate::uncertainty::{Metric, RefKind, ReferenceSet, Standardizer};
    use rand::SeedableRng;

    fn random_problem(seed: u64, n: usize, mode: Mode, metric: Metric, kappa: f64) -> AcquisitionProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ens = random_ensemble(&mut rng, n, 12, 3);
        let bounds = vec![(0.0, 1.0); n];
        let model = GriddedEnsemble::new(ens, &bounds).unwrap();
        let pts: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..n).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect();
        let std = Standardizer::new(vec![0.5; n], vec![0.3; n]).unwrap();
        let kind = if mode == Mode::ClusterPenalty {
            RefKind::Cluster
        } else {
            RefKind::Data
        };
        let refs = ReferenceSet::new(pts.iter().map(|p| std.standardize(p)).collect(), kind).unwrap();
        let alpha = (mode == Mode::Explore).then_some(1.0);
        AcquisitionProblem::new(mode, model, refs, std, metric, kappa, alpha).unwrap()
    }

    /// Exact penalty-mode minimum: in every cell, the closest point to each
    /// reference is its clamped projection.
    fn brute_force_penalty(p: &AcquisitionProblem) -> f64 {
        let grid = p.model.grid();
        let mut best = f64::INFINITY;
        for cell in grid.cells_in(&grid.full_box()) {
            let ext = grid.extents(&cell);
            for r in &p.refs.points {
                let raw = p.std.destandardize(r);
                let x: Vec<f64> = raw
                    .iter()
                    .zip(&ext)
                    .enumerate()
                    .map(|(i, (&v, &(lo, hi)))| {
                        let v = v.clamp(lo, hi);
                        if v <= lo && lo > grid.dims[i].lower {
                            lo.next_up()
                        } else {
                            v
                        }
                    })
                    .collect();
                best = best.min(p.evaluate(&x).unwrap());
            }
        }
        best
    }

    fn tight() -> SolverConfig {
        SolverConfig {
            rel_gap: 1e-9,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn penalty_matches_brute_force() {
        for seed in 0..12 {
            for (mode, metric) in [
                (Mode::Penalty, Metric::Manhattan),
                (Mode::Penalty, Metric::SquaredEuclidean),
                (Mode::ClusterPenalty, Metric::Manhattan),
            ] {
                let p = random_problem(seed, 2 + (seed % 2) as usize, mode, metric, 0.7);
                let exact = brute_force_penalty(&p);
                let res = solve(&p, &tight()).unwrap();
                assert_eq!(res.termination, Termination::Gap);
                assert!((res.upper_bound - exact).abs() <= 1e-9 * exact.abs().max(1.0), "seed {seed}: {} vs {exact}", res.upper_bound);
                assert!(res.lower_bound <= exact + 1e-12);
                assert_eq!(p.evaluate(&res.x_next).unwrap(), res.upper_bound);
            }
        }
    }

    #[test]
    fn explore_toy_one_dimension() {
        let tree = Tree {
            nodes: vec![Node::Leaf { value: 0.0 }],
        };
        let ens = TreeEnsemble::new(vec![tree], 0.0, 1).unwrap();
        let model = GriddedEnsemble::new(ens, &[(0.0, 1.0)]).unwrap();
        let refs = ReferenceSet::new(vec![vec![0.5]], RefKind::Data).unwrap();
        let p = AcquisitionProblem::new(
            Mode::Explore,
            model,
            refs,
            Standardizer::identity(1),
            Metric::Manhattan,
            1.0,
            Some(10.0),
        )
        .unwrap();
        let res = solve(&p, &tight()).unwrap();
        assert!((res.upper_bound + 0.5).abs() < 1e-12);
        assert!(res.x_next[0] == 0.0 || res.x_next[0] == 1.0);
    }

    #[test]
    fn explore_bounds_bracket_dense_sampling() {
        for seed in 0..6 {
            let p = random_problem(seed, 2, Mode::Explore, Metric::SquaredEuclidean, 1.5);
            let res = solve(
                &p,
                &SolverConfig {
                    rel_gap: 1e-6,
                    ..SolverConfig::default()
                },
            )
            .unwrap();
            let k = 200;
            let mut sampled = f64::INFINITY;
            for i in 0..=k {
                for j in 0..=k {
                    let x = [i as f64 / k as f64, j as f64 / k as f64];
                    sampled = sampled.min(p.evaluate(&x).unwrap());
                }
            }
            assert!(res.lower_bound <= sampled + 1e-12, "seed {seed}");
            assert!(res.upper_bound <= sampled + 1e-9, "seed {seed}: {} > {sampled}", res.upper_bound);
            assert!(res.rel_gap <= 1e-6);
        }
    }

    #[test]
    fn node_bound_is_valid_on_sub_boxes() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for seed in 0..8 {
            let p = random_problem(seed, 2, Mode::Penalty, Metric::Manhattan, 0.4);
            let grid = p.model.grid();
            for _ in 0..10 {
                let full = grid.full_box();
                let lo: Vec<usize> = full.hi.iter().map(|&h| rng.gen_range(0..=h)).collect();
                let hi: Vec<usize> = lo.iter().zip(&full.hi).map(|(&l, &h)| rng.gen_range(l..=h)).collect();
                let b = CellBox { lo, hi };
                let cfg = SolverConfig::default();
                let lb = node_lower_bound(&p, &b, None, &cfg);
                for cell in grid.cells_in(&b) {
                    let v = node_lower_bound(&p, &cell, None, &cfg);
                    assert!(lb <= v + 1e-12);
                    let x = grid.midpoint(&cell);
                    assert!(lb <= p.evaluate(&x).unwrap() + 1e-12);
                }
            }
        }
    }

    #[test]
    fn branching_rules_and_limits() {
        let p = random_problem(3, 3, Mode::Penalty, Metric::Manhattan, 0.5);
        let root = BnBNode::root(&p);
        match select_branch(&p, &root, 1).unwrap() {
            Branch::Grid { dim, line } => {
                // Only the first candidate is scored: the median line of dimension 0.
                let (first, last) = (root.cells.lo[0] + 1, root.cells.hi[0]);
                if first <= last {
                    assert_eq!((dim, line), (0, first + (last - first) / 2));
                }
            }
            b => panic!("unexpected {b:?}"),
        }
        let res = solve(
            &p,
            &SolverConfig {
                rel_gap: 1e-12,
                max_nodes: Some(1),
                ..SolverConfig::default()
            },
        )
        .unwrap();
        assert!(res.nodes_explored <= 1);
        assert!(res.lower_bound <= res.upper_bound);
        assert!(SolverConfig {
            lookahead: 0,
            ..SolverConfig::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn deterministic_and_monotone_history() {
        let p = random_problem(5, 3, Mode::Explore, Metric::Manhattan, 1.0);
        let cfg = SolverConfig {
            max_nodes: Some(400),
            ..SolverConfig::default()
        };
        let a = solve(&p, &cfg).unwrap();
        let b = solve(&p, &cfg).unwrap();
        assert_eq!(a.x_next, b.x_next);
        assert_eq!(a.upper_bound, b.upper_bound);
        assert_eq!(a.lower_bound, b.lower_bound);
        for w in a.history.windows(2) {
            assert!(w[1].upper_bound <= w[0].upper_bound);
            assert!(w[1].lower_bound >= w[0].lower_bound);
        }
    }

    #[test]
    fn baseline_settings_agree() {
        for seed in 0..5 {
            let p = random_problem(seed, 3, Mode::Penalty, Metric::SquaredEuclidean, 0.3);
            let strong = solve(&p, &tight()).unwrap();
            let plain = solve(
                &p,
                &SolverConfig {
                    lookahead: 1,
                    group_size: 1,
                    ..tight()
                },
            )
            .unwrap();
            assert!((strong.upper_bound - plain.upper_bound).abs() < 1e-9);
        }
    }
}
