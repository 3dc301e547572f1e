use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::ensemble::{Node, TreeEnsemble};

/// Thresholds closer than this collapse to a single grid line.
pub const THRESHOLD_TOLERANCE: f64 = 1e-12;

/// Ordered split thresholds of one dimension together with its domain bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimGrid {
    pub lower: f64,
    pub upper: f64,
    /// Strictly increasing, all strictly inside `(lower, upper)`.
    pub thresholds: Vec<f64>,
}

impl DimGrid {
    /// Number of interior thresholds (`m_i`).
    pub fn m(&self) -> usize {
        self.thresholds.len()
    }

    /// Grid line `j` for `j` in `0..=m+1`; line 0 is the lower bound and line
    /// `m+1` the upper bound.
    pub fn line(&self, j: usize) -> f64 {
        if j == 0 {
            self.lower
        } else if j <= self.thresholds.len() {
            self.thresholds[j - 1]
        } else {
            self.upper
        }
    }

    /// Grid position of a split threshold: 0 when every domain point goes
    /// right, `m+1` when every domain point goes left, otherwise the index of
    /// the grid line the threshold was collapsed onto.
    pub fn split_position(&self, threshold: f64) -> usize {
        if threshold <= self.lower {
            return 0;
        }
        if threshold >= self.upper {
            return self.thresholds.len() + 1;
        }
        let k = self.thresholds.partition_point(|&v| v < threshold);
        let below = k.checked_sub(1).map(|i| (i, threshold - self.thresholds[i]));
        let above = (k < self.thresholds.len()).then(|| (k, self.thresholds[k] - threshold));
        let nearest = match (below, above) {
            (Some(b), Some(a)) => {
                if a.1 < b.1 {
                    a
                } else {
                    b
                }
            }
            (Some(b), None) => b,
            (None, Some(a)) => a,
            (None, None) => unreachable!("threshold inside the domain of an empty grid"),
        };
        nearest.0 + 1
    }

    /// Index of the cell containing `x`. Cell `c` covers `(line(c), line(c+1)]`,
    /// with cell 0 also containing the lower bound.
    pub fn cell_of(&self, x: f64) -> usize {
        self.thresholds.partition_point(|&v| v < x)
    }
}

/// Per-dimension interval grid induced by the split thresholds of an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalGrid {
    pub dims: Vec<DimGrid>,
}

impl IntervalGrid {
    /// Collects the split thresholds of `ensemble`, keeps those strictly inside
    /// the bounds, and deduplicates them with [`THRESHOLD_TOLERANCE`].
    pub fn build(ensemble: &TreeEnsemble, bounds: &[(f64, f64)]) -> Result<Self> {
        if bounds.len() != ensemble.num_features {
            return Err(Error::DimensionMismatch {
                expected: ensemble.num_features,
                got: bounds.len(),
            });
        }
        let mut raw: Vec<Vec<f64>> = vec![Vec::new(); bounds.len()];
        for tree in &ensemble.trees {
            for node in &tree.nodes {
                if let Node::Split {
                    feature, threshold, ..
                } = *node
                {
                    raw[feature].push(threshold);
                }
            }
        }
        let dims = bounds
            .iter()
            .zip(raw)
            .enumerate()
            .map(|(i, (&(lower, upper), mut ts))| {
                if !(lower.is_finite() && upper.is_finite() && lower < upper) {
                    return Err(Error::invalid(format!(
                        "degenerate bounds in dimension {i}: [{lower}, {upper}]"
                    )));
                }
                ts.retain(|&t| t > lower && t < upper);
                ts.sort_by(f64::total_cmp);
                let mut thresholds: Vec<f64> = Vec::with_capacity(ts.len());
                for t in ts {
                    match thresholds.last() {
                        Some(&last) if t - last <= THRESHOLD_TOLERANCE => {}
                        _ => thresholds.push(t),
                    }
                }
                Ok(DimGrid {
                    lower,
                    upper,
                    thresholds,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(IntervalGrid { dims })
    }

    pub fn num_dims(&self) -> usize {
        self.dims.len()
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.dims.iter().map(|d| (d.lower, d.upper)).collect()
    }

    /// Total number of cells, saturating at `u128::MAX`.
    pub fn num_cells(&self) -> u128 {
        self.dims
            .iter()
            .fold(1u128, |acc, d| acc.saturating_mul(d.m() as u128 + 1))
    }

    pub fn full_box(&self) -> CellBox {
        CellBox {
            lo: vec![0; self.dims.len()],
            hi: self.dims.iter().map(|d| d.m()).collect(),
        }
    }

    /// The single cell containing `x`.
    pub fn cell_of(&self, x: &[f64]) -> CellBox {
        let idx: Vec<usize> = self.dims.iter().zip(x).map(|(d, &v)| d.cell_of(v)).collect();
        CellBox {
            lo: idx.clone(),
            hi: idx,
        }
    }

    /// Continuous extent `(lower, upper)` of a box in dimension `i`.
    pub fn extent(&self, b: &CellBox, i: usize) -> (f64, f64) {
        let d = &self.dims[i];
        (d.line(b.lo[i]), d.line(b.hi[i] + 1))
    }

    pub fn extents(&self, b: &CellBox) -> Vec<(f64, f64)> {
        (0..self.dims.len()).map(|i| self.extent(b, i)).collect()
    }

    pub fn midpoint(&self, b: &CellBox) -> Vec<f64> {
        self.extents(b)
            .into_iter()
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }

    /// Validates a box against this grid.
    pub fn check_box(&self, b: &CellBox) -> Result<()> {
        if b.lo.len() != self.dims.len() || b.hi.len() != self.dims.len() {
            return Err(Error::DimensionMismatch {
                expected: self.dims.len(),
                got: b.lo.len(),
            });
        }
        for (i, d) in self.dims.iter().enumerate() {
            if b.lo[i] > b.hi[i] || b.hi[i] > d.m() {
                return Err(Error::invalid(format!(
                    "box range [{}, {}] invalid in dimension {i} (m = {})",
                    b.lo[i],
                    b.hi[i],
                    d.m()
                )));
            }
        }
        Ok(())
    }

    /// Enumerates every cell inside `b` in lexicographic order.
    pub fn cells_in(&self, b: &CellBox) -> CellIter {
        CellIter {
            bounds: b.clone(),
            current: Some(b.lo.clone()),
        }
    }
}

/// A sub-rectangle of the grid given by inclusive cell-index ranges.
///
/// In dimension `i` the box covers cells `lo[i]..=hi[i]`, i.e. the continuous
/// interval `(line(lo[i]), line(hi[i] + 1)]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellBox {
    pub lo: Vec<usize>,
    pub hi: Vec<usize>,
}

impl CellBox {
    pub fn is_cell(&self) -> bool {
        self.lo.iter().zip(&self.hi).all(|(l, h)| l == h)
    }

    pub fn num_cells(&self) -> u128 {
        self.lo
            .iter()
            .zip(&self.hi)
            .fold(1u128, |acc, (l, h)| acc.saturating_mul((h - l + 1) as u128))
    }

    pub fn contains(&self, other: &CellBox) -> bool {
        (0..self.lo.len()).all(|i| self.lo[i] <= other.lo[i] && other.hi[i] <= self.hi[i])
    }

    /// Splits at grid line `j` of dimension `dim` into the cells left of the
    /// line and the cells right of it. Requires `lo[dim] < j <= hi[dim]`.
    pub fn split(&self, dim: usize, j: usize) -> (CellBox, CellBox) {
        debug_assert!(self.lo[dim] < j && j <= self.hi[dim]);
        let mut left = self.clone();
        let mut right = self.clone();
        left.hi[dim] = j - 1;
        right.lo[dim] = j;
        (left, right)
    }
}

pub struct CellIter {
    bounds: CellBox,
    current: Option<Vec<usize>>,
}

impl Iterator for CellIter {
    type Item = CellBox;

    fn next(&mut self) -> Option<CellBox> {
        let cur = self.current.take()?;
        let mut nxt = cur.clone();
        let mut advanced = false;
        for i in (0..nxt.len()).rev() {
            if nxt[i] < self.bounds.hi[i] {
                nxt[i] += 1;
                advanced = true;
                break;
            }
            nxt[i] = self.bounds.lo[i];
        }
        if advanced {
            self.current = Some(nxt);
        }
        Some(CellBox {
            lo: cur.clone(),
            hi: cur,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::ensemble::Tree;

    fn stump(feature: usize, threshold: f64) -> Tree {
        Tree {
            nodes: vec![
                Node::Split {
                    feature,
                    threshold,
                    left: 1,
                    right: 2,
                },
                Node::Leaf { value: 0.0 },
                Node::Leaf { value: 1.0 },
            ],
        }
    }

    #[test]
    fn single_threshold() {
        let ens = TreeEnsemble::new(vec![stump(0, 0.5)], 0.0, 1).unwrap();
        let grid = IntervalGrid::build(&ens, &[(0.0, 1.0)]).unwrap();
        assert_eq!(grid.dims[0].m(), 1);
        assert_eq!(
            (0..=2).map(|j| grid.dims[0].line(j)).collect::<Vec<_>>(),
            vec![0.0, 0.5, 1.0]
        );
    }

    #[test]
    fn duplicate_thresholds_collapse() {
        let ens = TreeEnsemble::new(
            vec![stump(0, 0.5), stump(0, 0.5), stump(0, 0.5 + 1e-14)],
            0.0,
            1,
        )
        .unwrap();
        let grid = IntervalGrid::build(&ens, &[(0.0, 1.0)]).unwrap();
        assert_eq!(grid.dims[0].thresholds, vec![0.5]);
        assert_eq!(grid.dims[0].split_position(0.5 + 1e-14), 1);
    }

    #[test]
    fn out_of_domain_thresholds_dropped() {
        let ens = TreeEnsemble::new(vec![stump(0, 1.5), stump(0, -3.0)], 0.0, 1).unwrap();
        let grid = IntervalGrid::build(&ens, &[(0.0, 1.0)]).unwrap();
        assert_eq!(grid.dims[0].m(), 0);
        assert_eq!(grid.dims[0].split_position(1.5), 1);
        assert_eq!(grid.dims[0].split_position(-3.0), 0);
    }

    #[test]
    fn degenerate_bounds_rejected() {
        let ens = TreeEnsemble::new(vec![], 0.0, 1).unwrap();
        assert!(IntervalGrid::build(&ens, &[(1.0, 1.0)]).is_err());
        assert!(IntervalGrid::build(&ens, &[(2.0, 1.0)]).is_err());
    }

    #[test]
    fn cell_enumeration_counts() {
        let ens =
            TreeEnsemble::new(vec![stump(0, 0.2), stump(0, 0.7), stump(1, 0.4)], 0.0, 2).unwrap();
        let grid = IntervalGrid::build(&ens, &[(0.0, 1.0), (0.0, 1.0)]).unwrap();
        let full = grid.full_box();
        assert_eq!(full.num_cells(), 6);
        let cells: Vec<_> = grid.cells_in(&full).collect();
        assert_eq!(cells.len(), 6);
        assert!(cells.iter().all(|c| c.is_cell() && full.contains(c)));
        assert_eq!(grid.cell_of(&[0.2, 0.41]).lo, vec![0, 1]);
        assert_eq!(grid.cell_of(&[0.0, 1.0]).lo, vec![0, 1]);
    }
}
