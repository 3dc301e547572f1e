//! Box-restricted reasoning over a tree ensemble: which leaves a box can
//! reach, and lower bounds on the ensemble prediction inside a box.

use crate::error::Result;
use crate::tree::ensemble::{Node, TreeEnsemble};
use crate::tree::grid::{CellBox, IntervalGrid};

/// Default cap on search nodes per tree group in [`GriddedEnsemble::partition_refine_bound`].
pub const DEFAULT_REFINE_BUDGET: usize = 10_000;

#[derive(Debug, Clone, Copy)]
enum GNode {
    Split {
        feature: usize,
        /// Grid position of the threshold, see [`crate::tree::grid::DimGrid::split_position`].
        pos: usize,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// An ensemble paired with its interval grid, with every split threshold
/// resolved to a grid position so box reasoning is purely combinatorial.
#[derive(Debug, Clone)]
pub struct GriddedEnsemble {
    ensemble: TreeEnsemble,
    grid: IntervalGrid,
    trees: Vec<Vec<GNode>>,
}

impl GriddedEnsemble {
    pub fn new(ensemble: TreeEnsemble, bounds: &[(f64, f64)]) -> Result<Self> {
        let grid = IntervalGrid::build(&ensemble, bounds)?;
        Ok(Self::with_grid(ensemble, grid))
    }

    /// Pairs an ensemble with a grid that was built from it.
    pub fn with_grid(ensemble: TreeEnsemble, grid: IntervalGrid) -> Self {
        let trees = ensemble
            .trees
            .iter()
            .map(|tree| {
                tree.nodes
                    .iter()
                    .map(|n| match *n {
                        Node::Leaf { value } => GNode::Leaf { value },
                        Node::Split {
                            feature,
                            threshold,
                            left,
                            right,
                        } => GNode::Split {
                            feature,
                            pos: grid.dims[feature].split_position(threshold),
                            left,
                            right,
                        },
                    })
                    .collect()
            })
            .collect();
        GriddedEnsemble {
            ensemble,
            grid,
            trees,
        }
    }

    pub fn ensemble(&self) -> &TreeEnsemble {
        &self.ensemble
    }

    pub fn grid(&self) -> &IntervalGrid {
        &self.grid
    }

    pub fn num_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn base_offset(&self) -> f64 {
        self.ensemble.base_offset
    }

    /// Leaves (node indices, ascending) of tree `t` whose region intersects `b`.
    pub fn reachable_leaves(&self, t: usize, b: &CellBox) -> Vec<usize> {
        let mut scratch = b.clone();
        let mut out = Vec::new();
        self.visit_reachable(t, 0, &mut scratch, &mut |leaf, _, _| out.push(leaf));
        out
    }

    /// Descends tree `t` inside `b`, narrowing the box along the path so that
    /// repeated splits on one feature are handled exactly. The callback sees
    /// the leaf index, its value and the box narrowed to the leaf region.
    fn visit_reachable<F>(&self, t: usize, idx: usize, b: &mut CellBox, f: &mut F)
    where
        F: FnMut(usize, f64, &CellBox),
    {
        match self.trees[t][idx] {
            GNode::Leaf { value } => f(idx, value, b),
            GNode::Split {
                feature,
                pos,
                left,
                right,
            } => {
                if b.lo[feature] < pos {
                    let saved = b.hi[feature];
                    b.hi[feature] = saved.min(pos - 1);
                    self.visit_reachable(t, left, b, f);
                    b.hi[feature] = saved;
                }
                if b.hi[feature] >= pos {
                    let saved = b.lo[feature];
                    b.lo[feature] = saved.max(pos);
                    self.visit_reachable(t, right, b, f);
                    b.lo[feature] = saved;
                }
            }
        }
    }

    /// Smallest leaf value of tree `t` reachable from `b` (ties: lowest leaf index).
    pub fn tree_min(&self, t: usize, b: &CellBox) -> (usize, f64) {
        let mut scratch = b.clone();
        self.tree_min_in(t, &mut scratch)
    }

    /// [`Self::tree_min`] without copying the box; `scratch` is restored on return.
    pub(crate) fn tree_min_in(&self, t: usize, scratch: &mut CellBox) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        self.visit_reachable(t, 0, scratch, &mut |leaf, value, _| {
            if value < best.1 {
                best = (leaf, value);
            }
        });
        best
    }

    /// Per-tree minima over `b`, without the base offset.
    pub fn tree_minima(&self, b: &CellBox) -> Vec<f64> {
        let mut scratch = b.clone();
        (0..self.trees.len())
            .map(|t| self.tree_min_in(t, &mut scratch).1)
            .collect()
    }

    /// `base_offset + Σ_t min_{l reachable} F_{t,l}`; a lower bound on the
    /// prediction anywhere in `b`, exact when `b` is a single cell.
    pub fn min_prediction_bound(&self, b: &CellBox) -> f64 {
        self.tree_minima(b)
            .into_iter()
            .fold(self.base_offset(), |acc, m| acc + m)
    }

    /// Exact prediction on a single cell.
    pub fn cell_value(&self, cell: &CellBox) -> f64 {
        debug_assert!(cell.is_cell());
        self.min_prediction_bound(cell)
    }

    /// Grouped lower bound: trees are split into consecutive groups of
    /// `group_size`, the exact minimum of each group's partial sum over `b` is
    /// found by a depth-first search over leaf combinations, and the group
    /// minima are added up. A group whose search exceeds `node_budget` falls
    /// back to the sum of its per-tree minima.
    pub fn partition_refine_bound(&self, b: &CellBox, group_size: usize, node_budget: usize) -> f64 {
        let group_size = group_size.max(1);
        let mut scratch = b.clone();
        let mut total = self.base_offset();
        let mut start = 0;
        while start < self.trees.len() {
            let end = (start + group_size).min(self.trees.len());
            total += self.group_min(start..end, &mut scratch, node_budget);
            start = end;
        }
        total
    }

    /// Exact minimum of `Σ_{t in group} F_t(x)` over `b`, or the per-tree
    /// relaxation if the search needs more than `budget` nodes.
    fn group_min(&self, group: std::ops::Range<usize>, b: &mut CellBox, budget: usize) -> f64 {
        let trees: Vec<usize> = group.collect();
        let per_tree: Vec<f64> = trees.iter().map(|&t| self.tree_min_in(t, b).1).collect();
        let relaxed: f64 = per_tree.iter().sum();
        if trees.len() == 1 {
            return relaxed;
        }
        let mut search = GroupSearch {
            model: self,
            trees: &trees,
            best: f64::INFINITY,
            nodes: 0,
            budget,
        };
        match search.run(0, b, 0.0) {
            Ok(()) => search.best.max(relaxed),
            Err(BudgetExceeded) => relaxed,
        }
    }
}

struct BudgetExceeded;

struct GroupSearch<'a> {
    model: &'a GriddedEnsemble,
    trees: &'a [usize],
    best: f64,
    nodes: usize,
    budget: usize,
}

impl GroupSearch<'_> {
    fn run(&mut self, k: usize, b: &mut CellBox, acc: f64) -> Result<(), BudgetExceeded> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(BudgetExceeded);
        }
        if k == self.trees.len() {
            if acc < self.best {
                self.best = acc;
            }
            return Ok(());
        }
        // Optimistic completion: remaining trees at their own minima.
        let rest: f64 = self.trees[k + 1..]
            .iter()
            .map(|&t| self.model.tree_min_in(t, b).1)
            .sum();
        let t = self.trees[k];
        let mut leaves: Vec<(f64, CellBox)> = Vec::new();
        self.model
            .visit_reachable(t, 0, b, &mut |_, value, region| leaves.push((value, region.clone())));
        leaves.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (value, mut region) in leaves {
            if acc + value + rest >= self.best {
                break;
            }
            self.run(k + 1, &mut region, acc + value)?;
        }
        Ok(())
    }
}
