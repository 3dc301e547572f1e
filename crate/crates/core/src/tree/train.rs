//! Squared-loss gradient boosting with histogram split search.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::ensemble::{Node, Tree, TreeEnsemble};
use crate::uncertainty::Dataset;

/// Upper limit on candidate split thresholds per feature.
pub const MAX_CANDIDATES: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbrtParams {
    pub num_trees: usize,
    pub max_depth: usize,
    pub max_leaves: usize,
    pub min_samples_leaf: usize,
    pub learning_rate: f64,
    /// Recorded for reproducibility; the trainer itself draws no random numbers.
    pub seed: u64,
}

impl Default for GbrtParams {
    fn default() -> Self {
        GbrtParams {
            num_trees: 400,
            max_depth: 3,
            max_leaves: 5,
            min_samples_leaf: 20,
            learning_rate: 0.1,
            seed: 0,
        }
    }
}

impl GbrtParams {
    /// Larger ensemble of shallower trees.
    pub fn large() -> Self {
        GbrtParams {
            num_trees: 800,
            max_depth: 2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_trees < 1 {
            return Err(Error::invalid("num_trees must be at least 1"));
        }
        if self.max_depth < 1 {
            return Err(Error::invalid("max_depth must be at least 1"));
        }
        if self.max_leaves < 1 {
            return Err(Error::invalid("max_leaves must be at least 1"));
        }
        if self.min_samples_leaf < 1 {
            return Err(Error::invalid("min_samples_leaf must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::invalid(format!(
                "learning_rate must be in (0, 1], got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Candidate thresholds of one feature and the bin of every sample.
/// A sample in bin `b` satisfies `x <= thresholds[k]` exactly when `b <= k`.
struct Binned {
    thresholds: Vec<f64>,
    bins: Vec<u16>,
}

fn bin_feature(values: &[f64]) -> Binned {
    let mut uniq: Vec<f64> = values.to_vec();
    uniq.sort_by(f64::total_cmp);
    uniq.dedup();
    let mut thresholds: Vec<f64> = if uniq.len() <= MAX_CANDIDATES + 1 {
        uniq.windows(2).map(|w| midpoint(w[0], w[1])).collect()
    } else {
        (1..=MAX_CANDIDATES)
            .map(|q| {
                let i = q * (uniq.len() - 1) / (MAX_CANDIDATES + 1);
                midpoint(uniq[i], uniq[i + 1])
            })
            .collect()
    };
    thresholds.dedup();
    let bins = values
        .iter()
        .map(|&v| thresholds.partition_point(|&t| t < v) as u16)
        .collect();
    Binned { thresholds, bins }
}

/// Midpoint of two consecutive distinct values, kept strictly below `b` so
/// that `a <= t < b` holds even when the two are adjacent floats.
fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + 0.5 * (b - a);
    if m < b {
        m
    } else {
        a
    }
}

#[derive(Clone, Copy)]
struct SplitChoice {
    gain: f64,
    feature: usize,
    bin: usize,
}

struct GrowLeaf {
    samples: Vec<usize>,
    depth: usize,
    node: usize,
    best: Option<SplitChoice>,
}

enum Arena {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

struct Trainer<'a> {
    binned: &'a [Binned],
    params: &'a GbrtParams,
}

impl Trainer<'_> {
    fn best_split(&self, samples: &[usize], residual: &[f64]) -> Option<SplitChoice> {
        let n = samples.len();
        let min_leaf = self.params.min_samples_leaf;
        if n < 2 * min_leaf {
            return None;
        }
        let total: f64 = samples.iter().map(|&i| residual[i]).sum();
        let parent = total * total / n as f64;
        let mut best: Option<SplitChoice> = None;
        for (feature, fb) in self.binned.iter().enumerate() {
            if fb.thresholds.is_empty() {
                continue;
            }
            let nb = fb.thresholds.len() + 1;
            let mut sums = vec![0.0; nb];
            let mut counts = vec![0usize; nb];
            for &i in samples {
                let b = fb.bins[i] as usize;
                sums[b] += residual[i];
                counts[b] += 1;
            }
            let (mut sl, mut nl) = (0.0, 0usize);
            for k in 0..fb.thresholds.len() {
                sl += sums[k];
                nl += counts[k];
                let nr = n - nl;
                if nl < min_leaf {
                    continue;
                }
                if nr < min_leaf {
                    break;
                }
                let sr = total - sl;
                let gain = sl * sl / nl as f64 + sr * sr / nr as f64 - parent;
                if gain > 1e-12 * (1.0 + parent.abs()) && best.map_or(true, |b| gain > b.gain) {
                    best = Some(SplitChoice {
                        gain,
                        feature,
                        bin: k,
                    });
                }
            }
        }
        best
    }

    /// Grows one tree leaf-wise: the leaf with the largest gain is split
    /// first until `max_leaves` is reached or no leaf can be split.
    fn grow(&self, n_rows: usize, residual: &[f64]) -> (Vec<Arena>, Vec<(Vec<usize>, usize)>) {
        let p = self.params;
        let mut arena = vec![Arena::Leaf(0.0)];
        let all: Vec<usize> = (0..n_rows).collect();
        let root_best = if p.max_depth > 0 && p.max_leaves > 1 {
            self.best_split(&all, residual)
        } else {
            None
        };
        let mut open = vec![GrowLeaf {
            samples: all,
            depth: 0,
            node: 0,
            best: root_best,
        }];
        let mut done: Vec<(Vec<usize>, usize)> = Vec::new();
        let mut num_leaves = 1;
        while num_leaves < p.max_leaves {
            let pick = open
                .iter()
                .enumerate()
                .filter_map(|(i, l)| l.best.map(|b| (i, b.gain)))
                .fold(None::<(usize, f64)>, |acc, (i, g)| match acc {
                    Some((_, bg)) if bg >= g => acc,
                    _ => Some((i, g)),
                });
            let Some((i, _)) = pick else { break };
            let leaf = open.swap_remove(i);
            let choice = leaf.best.unwrap();
            let fb = &self.binned[choice.feature];
            let (ls, rs): (Vec<usize>, Vec<usize>) = leaf
                .samples
                .iter()
                .partition(|&&s| (fb.bins[s] as usize) <= choice.bin);
            let left = arena.len();
            arena.push(Arena::Leaf(0.0));
            let right = arena.len();
            arena.push(Arena::Leaf(0.0));
            arena[leaf.node] = Arena::Split {
                feature: choice.feature,
                threshold: fb.thresholds[choice.bin],
                left,
                right,
            };
            num_leaves += 1;
            for (samples, node) in [(ls, left), (rs, right)] {
                let depth = leaf.depth + 1;
                let best = if depth < p.max_depth {
                    self.best_split(&samples, residual)
                } else {
                    None
                };
                open.push(GrowLeaf {
                    samples,
                    depth,
                    node,
                    best,
                });
            }
        }
        done.extend(open.into_iter().map(|l| (l.samples, l.node)));
        (arena, done)
    }
}

/// Converts an arena tree into preorder node layout.
fn to_preorder(arena: &[Arena]) -> Tree {
    fn emit(arena: &[Arena], idx: usize, out: &mut Vec<Node>) -> usize {
        let pos = out.len();
        match arena[idx] {
            Arena::Leaf(value) => out.push(Node::Leaf { value }),
            Arena::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                out.push(Node::Leaf { value: 0.0 });
                let l = emit(arena, left, out);
                let r = emit(arena, right, out);
                out[pos] = Node::Split {
                    feature,
                    threshold,
                    left: l,
                    right: r,
                };
            }
        }
        pos
    }
    let mut nodes = Vec::with_capacity(arena.len());
    emit(arena, 0, &mut nodes);
    Tree { nodes }
}

/// Fits `params.num_trees` regression trees to the residuals of a
/// constant-mean start, each stage scaled by the learning rate.
pub fn train(dataset: &Dataset, params: &GbrtParams) -> Result<TreeEnsemble> {
    params.validate()?;
    let rows = dataset.len();
    if rows == 0 {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    let n = dataset.num_features();
    let binned: Vec<Binned> = (0..n)
        .map(|f| {
            let col: Vec<f64> = dataset.x.iter().map(|r| r[f]).collect();
            bin_feature(&col)
        })
        .collect();
    let base = dataset.y.iter().sum::<f64>() / rows as f64;
    let mut residual: Vec<f64> = dataset.y.iter().map(|y| y - base).collect();
    let trainer = Trainer {
        binned: &binned,
        params,
    };
    let mut trees = Vec::with_capacity(params.num_trees);
    for _ in 0..params.num_trees {
        let (mut arena, leaves) = trainer.grow(rows, &residual);
        for (samples, node) in leaves {
            let mean = samples.iter().map(|&i| residual[i]).sum::<f64>() / samples.len() as f64;
            let value = params.learning_rate * mean;
            for &i in &samples {
                residual[i] -= value;
            }
            arena[node] = Arena::Leaf(value);
        }
        trees.push(to_preorder(&arena));
    }
    TreeEnsemble::new(trees, base, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(num_trees: usize, max_depth: usize, lr: f64) -> GbrtParams {
        GbrtParams {
            num_trees,
            max_depth,
            max_leaves: 1 << max_depth,
            min_samples_leaf: 1,
            learning_rate: lr,
            seed: 0,
        }
    }

    #[test]
    fn constant_targets() {
        let ds = Dataset::new(vec![vec![0.0], vec![1.0], vec![2.0]], vec![3.0; 3]).unwrap();
        let ens = train(&ds, &params(5, 2, 0.1)).unwrap();
        assert_eq!(ens.len(), 5);
        for x in [-1.0, 0.5, 1.7, 9.0] {
            assert_eq!(ens.predict(&[x]).unwrap(), 3.0);
        }
    }

    #[test]
    fn one_stage_two_points() {
        let ds = Dataset::new(vec![vec![0.0], vec![1.0]], vec![0.0, 2.0]).unwrap();
        let ens = train(&ds, &params(1, 1, 1.0)).unwrap();
        assert_eq!(ens.predict(&[0.0]).unwrap(), 0.0);
        assert_eq!(ens.predict(&[0.25]).unwrap(), 0.0);
        assert_eq!(ens.predict(&[0.75]).unwrap(), 2.0);
        assert_eq!(ens.predict(&[1.0]).unwrap(), 2.0);
        match ens.trees[0].nodes[0] {
            Node::Split { threshold, .. } => assert_eq!(threshold, 0.5),
            _ => panic!("expected a split"),
        }
    }

    #[test]
    fn deterministic() {
        let x: Vec<Vec<f64>> = (0..60)
            .map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()])
            .collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] * r[0] + 3.0 * r[1]).collect();
        let ds = Dataset::new(x, y).unwrap();
        let p = GbrtParams {
            num_trees: 30,
            min_samples_leaf: 3,
            ..GbrtParams::default()
        };
        assert_eq!(train(&ds, &p).unwrap(), train(&ds, &p).unwrap());
    }

    #[test]
    fn respects_structure_limits() {
        let x: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64, (i * 7 % 13) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| (r[0] / 10.0).sin() + r[1]).collect();
        let ds = Dataset::new(x, y).unwrap();
        let p = GbrtParams {
            num_trees: 10,
            max_depth: 3,
            max_leaves: 5,
            min_samples_leaf: 20,
            ..GbrtParams::default()
        };
        let ens = train(&ds, &p).unwrap();
        for t in &ens.trees {
            assert!(t.num_leaves() <= 5);
            assert!(t.depth() <= 3);
            for leaf in t.leaves() {
                let count = ds.x.iter().filter(|r| t.leaf_index(r) == leaf).count();
                assert!(count >= 20, "leaf with {count} samples");
            }
        }
    }

    #[test]
    fn invalid_inputs() {
        let ds = Dataset::new(vec![vec![0.0]], vec![1.0]).unwrap();
        assert!(train(&ds, &params(0, 1, 0.1)).is_err());
        assert!(train(&ds, &params(1, 0, 0.1)).is_err());
        assert!(train(&ds, &params(1, 1, 0.0)).is_err());
        assert!(train(&ds, &params(1, 1, 1.5)).is_err());
    }

    #[test]
    fn many_unique_values_capped() {
        let values: Vec<f64> = (0..5000).map(|i| i as f64).collect();
        let b = bin_feature(&values);
        assert!(b.thresholds.len() <= MAX_CANDIDATES);
        assert!(b.thresholds.windows(2).all(|w| w[0] < w[1]));
    }
}
