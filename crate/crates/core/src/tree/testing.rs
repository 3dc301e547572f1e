//! Random instances and brute-force oracles shared by unit tests.

use rand::Rng;

use crate::tree::bounds::GriddedEnsemble;
use crate::tree::ensemble::{Node, Tree, TreeEnsemble};
use crate::tree::grid::CellBox;

/// Random tree with thresholds drawn from a coarse lattice in `[0, 1]` so that
/// different trees share split values.
pub fn random_tree<R: Rng>(rng: &mut R, num_features: usize, max_depth: usize) -> Tree {
    fn grow<R: Rng>(rng: &mut R, nodes: &mut Vec<Node>, n: usize, depth: usize) -> usize {
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
    grow(rng, &mut nodes, num_features, max_depth);
    Tree { nodes }
}

pub fn random_ensemble<R: Rng>(
    rng: &mut R,
    num_features: usize,
    num_trees: usize,
    max_depth: usize,
) -> TreeEnsemble {
    let trees = (0..num_trees)
        .map(|_| random_tree(rng, num_features, max_depth))
        .collect();
    TreeEnsemble::new(trees, rng.gen_range(-1.0..1.0), num_features).unwrap()
}

/// Minimum of the prediction over the cells of `b`, evaluated at midpoints.
pub fn brute_force_box_min(model: &GriddedEnsemble, b: &CellBox) -> f64 {
    model
        .grid()
        .cells_in(b)
        .map(|c| {
            model
                .ensemble()
                .predict(&model.grid().midpoint(&c))
                .unwrap()
        })
        .fold(f64::INFINITY, f64::min)
}
