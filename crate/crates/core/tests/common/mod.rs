//! Random instances and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use gbtopt::solver::{AcquisitionProblem, Mode, SolveResult};
use gbtopt::tree::{GriddedEnsemble, Node, Tree, TreeEnsemble};
use gbtopt::uncertainty::{alpha_limit, kmeans, Dataset, Metric, ReferenceSet, Standardizer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random tree with thresholds on a 1/20 lattice in `[0, 1]`, so trees share
/// split values and the grid stays small.
pub fn random_tree(rng: &mut ChaCha8Rng, n: usize, depth: usize) -> Tree {
    fn grow(rng: &mut ChaCha8Rng, nodes: &mut Vec<Node>, n: usize, depth: usize) -> usize {
        let idx = nodes.len();
        if depth == 0 || (idx > 0 && rng.gen_bool(0.3)) {
            nodes.push(Node::Leaf {
                value: rng.gen_range(-2.0..2.0),
            });
            return idx;
        }
        nodes.push(Node::Leaf { value: 0.0 });
        let feature = rng.gen_range(0..n);
        let threshold = rng.gen_range(1..20) as f64 / 20.0;
        let left = grow(rng, nodes, n, depth - 1);
        let right = grow(rng, nodes, n, depth - 1);
        nodes[idx] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        idx
    }
    let mut nodes = Vec::new();
    grow(rng, &mut nodes, n, depth);
    Tree { nodes }
}

pub fn random_ensemble(rng: &mut ChaCha8Rng, n: usize, trees: usize, depth: usize) -> TreeEnsemble {
    let trees = (0..trees).map(|_| random_tree(rng, n, depth)).collect();
    TreeEnsemble::new(trees, rng.gen_range(-1.0..1.0), n).unwrap()
}

#[derive(Debug, Clone, Copy)]
pub struct InstanceSpec {
    pub seed: u64,
    pub dim: usize,
    pub max_trees: usize,
    pub max_cells: u128,
    pub mode: Mode,
    pub metric: Metric,
    pub kappa: f64,
}

/// Random problem on `[0, 1]^dim` with 4–10 observations. Ensembles are
/// redrawn until the grid has at most `max_cells` cells.
pub fn random_problem(spec: InstanceSpec) -> AcquisitionProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.dim;
    let bounds = vec![(0.0, 1.0); n];
    let model = loop {
        let trees = rng.gen_range(1..=spec.max_trees);
        let m = GriddedEnsemble::new(random_ensemble(&mut rng, n, trees, 3), &bounds).unwrap();
        if m.grid().num_cells() <= spec.max_cells {
            break m;
        }
    };
    let rows = rng.gen_range(4..=10);
    let x: Vec<Vec<f64>> = (0..rows)
        .map(|_| (0..n).map(|_| rng.gen_range(0.0..1.0)).collect())
        .collect();
    let y: Vec<f64> = x
        .iter()
        .map(|p| model.ensemble().predict(p).unwrap() + rng.gen_range(-0.5..0.5))
        .collect();
    let data = Dataset::new(x, y).unwrap();
    let std = Standardizer::fit(&data).unwrap();
    let refs = match spec.mode {
        Mode::ClusterPenalty => {
            let pts: Vec<Vec<f64>> = data.x.iter().map(|p| std.standardize(p)).collect();
            kmeans(&pts, 3, spec.seed, 100).unwrap().centers
        }
        _ => ReferenceSet::from_data(&data, &std).unwrap(),
    };
    let limit = (spec.mode == Mode::Explore).then(|| alpha_limit(0.5, &data.y).unwrap());
    AcquisitionProblem::new(spec.mode, model, refs, std, spec.metric, spec.kappa, limit).unwrap()
}

/// Exact penalty-mode optimum by cell enumeration. The prediction is constant
/// on a cell, so the best point of a cell is the projection of the nearest
/// reference onto it (moved one ulp inside when it lands on an open face).
pub fn penalty_oracle(p: &AcquisitionProblem) -> f64 {
    let grid = p.model.grid();
    let mut best = f64::INFINITY;
    for cell in grid.cells_in(&grid.full_box()) {
        let ext = grid.extents(&cell);
        for r in &p.refs.points {
            let x: Vec<f64> = p
                .std
                .destandardize(r)
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

/// Dense-grid minimum: `points_per_dim` evenly spaced values per dimension.
pub fn grid_oracle(p: &AcquisitionProblem, points_per_dim: usize) -> f64 {
    let bounds = p.bounds();
    let axes: Vec<Vec<f64>> = bounds
        .iter()
        .map(|&(lo, hi)| {
            (0..points_per_dim)
                .map(|k| lo + (hi - lo) * k as f64 / (points_per_dim - 1) as f64)
                .collect()
        })
        .collect();
    let mut best = f64::INFINITY;
    let mut idx = vec![0usize; bounds.len()];
    let mut x = vec![0.0; bounds.len()];
    loop {
        for (i, &k) in idx.iter().enumerate() {
            x[i] = axes[i][k];
        }
        best = best.min(p.evaluate(&x).unwrap());
        let mut d = 0;
        loop {
            if d == idx.len() {
                return best;
            }
            idx[d] += 1;
            if idx[d] < points_per_dim {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Checks the logged history: ub ≥ lb and the gap never increases. Returns
/// a description of the first violation.
pub fn check_history(res: &SolveResult) -> Result<(), String> {
    let mut prev = f64::INFINITY;
    for (k, h) in res.history.iter().enumerate() {
        if h.upper_bound < h.lower_bound {
            return Err(format!("entry {k}: ub {} < lb {}", h.upper_bound, h.lower_bound));
        }
        if h.rel_gap > prev {
            return Err(format!("entry {k}: gap rose from {prev} to {}", h.rel_gap));
        }
        prev = h.rel_gap;
    }
    Ok(())
}
