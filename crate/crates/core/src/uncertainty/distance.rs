//! Standardized distances between candidate points and reference points,
//! and their extremes over axis-aligned boxes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::IntervalGrid;
use crate::uncertainty::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// `‖a − b‖₂²`
    SquaredEuclidean,
    /// `‖a − b‖₁`
    Manhattan,
}

impl Metric {
    /// Adds up per-dimension absolute deviations.
    #[inline]
    pub fn aggregate<I: IntoIterator<Item = f64>>(self, deviations: I) -> f64 {
        match self {
            Metric::SquaredEuclidean => deviations.into_iter().map(|d| d * d).sum(),
            Metric::Manhattan => deviations.into_iter().map(f64::abs).sum(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::SquaredEuclidean => "squared-euclidean",
            Metric::Manhattan => "manhattan",
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared-euclidean" | "euclidean" | "l2" => Ok(Metric::SquaredEuclidean),
            "manhattan" | "l1" => Ok(Metric::Manhattan),
            other => Err(Error::invalid(format!("unknown metric {other:?}"))),
        }
    }
}

/// Per-dimension population mean and standard deviation of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Fits population moments; zero standard deviations are replaced by 1.
    pub fn fit(dataset: &Dataset) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::invalid("cannot standardize an empty dataset"));
        }
        let n = dataset.num_features();
        let rows = dataset.len() as f64;
        let mut mean = vec![0.0; n];
        for row in &dataset.x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= rows);
        let mut var = vec![0.0; n];
        for row in &dataset.x {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / rows).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Standardizer { mean, std })
    }

    pub fn identity(n: usize) -> Self {
        Standardizer {
            mean: vec![0.0; n],
            std: vec![1.0; n],
        }
    }

    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: std.len(),
            });
        }
        if !std.iter().all(|s| s.is_finite() && *s > 0.0) || !mean.iter().all(|m| m.is_finite()) {
            return Err(Error::invalid(
                "standardizer needs finite means and positive standard deviations",
            ));
        }
        Ok(Standardizer { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    #[inline]
    pub fn standardize_coord(&self, i: usize, v: f64) -> f64 {
        (v - self.mean[i]) / self.std[i]
    }

    #[inline]
    pub fn destandardize_coord(&self, i: usize, v: f64) -> f64 {
        self.mean[i] + self.std[i] * v
    }

    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, &v)| self.standardize_coord(i, v))
            .collect()
    }

    pub fn destandardize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(i, &v)| self.destandardize_coord(i, v))
            .collect()
    }

    /// Box extents mapped to standardized coordinates.
    pub fn standardize_box(&self, extents: &[(f64, f64)]) -> Vec<(f64, f64)> {
        extents
            .iter()
            .enumerate()
            .map(|(i, &(lo, hi))| (self.standardize_coord(i, lo), self.standardize_coord(i, hi)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefKind {
    Data,
    Cluster,
}

/// Reference points in standardized coordinates: the data points themselves
/// or cluster centers derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSet {
    pub points: Vec<Vec<f64>>,
    pub kind: RefKind,
}

impl ReferenceSet {
    pub fn new(points: Vec<Vec<f64>>, kind: RefKind) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("reference set is empty"));
        }
        let n = points[0].len();
        if points.iter().any(|p| p.len() != n) {
            return Err(Error::invalid("reference points have inconsistent dimensions"));
        }
        if !points.iter().flatten().all(|v| v.is_finite()) {
            return Err(Error::invalid("reference points must be finite"));
        }
        Ok(ReferenceSet { points, kind })
    }

    /// The data points themselves, standardized once.
    pub fn from_data(dataset: &Dataset, std: &Standardizer) -> Result<Self> {
        Self::new(
            dataset.x.iter().map(|x| std.standardize(x)).collect(),
            RefKind::Data,
        )
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }
}

/// Distance from raw point `x` to standardized reference `reference`.
pub fn distance(x: &[f64], reference: &[f64], std: &Standardizer, metric: Metric) -> Result<f64> {
    if x.len() != reference.len() || x.len() != std.dim() {
        return Err(Error::DimensionMismatch {
            expected: reference.len(),
            got: x.len(),
        });
    }
    Ok(distance_unchecked(x, reference, std, metric))
}

#[inline]
pub(crate) fn distance_unchecked(x: &[f64], reference: &[f64], std: &Standardizer, metric: Metric) -> f64 {
    metric.aggregate(
        x.iter()
            .zip(reference)
            .enumerate()
            .map(|(i, (&v, &r))| r - std.standardize_coord(i, v)),
    )
}

/// Distance from `x` to the closest reference.
pub fn min_distance(x: &[f64], refs: &ReferenceSet, std: &Standardizer, metric: Metric) -> Result<f64> {
    if x.len() != refs.dim() || x.len() != std.dim() {
        return Err(Error::DimensionMismatch {
            expected: refs.dim(),
            got: x.len(),
        });
    }
    Ok(min_distance_unchecked(x, refs, std, metric))
}

pub(crate) fn min_distance_unchecked(
    x: &[f64],
    refs: &ReferenceSet,
    std: &Standardizer,
    metric: Metric,
) -> f64 {
    let z = std.standardize(x);
    refs.points
        .iter()
        .map(|r| metric.aggregate(z.iter().zip(r).map(|(a, b)| b - a)))
        .fold(f64::INFINITY, f64::min)
}

/// Exploration limit `ζ · Var(y)` with the population variance of the raw targets.
pub fn alpha_limit(zeta: f64, targets: &[f64]) -> Result<f64> {
    if !(zeta >= 0.0 && zeta.is_finite()) {
        return Err(Error::invalid(format!("zeta must be a non-negative number, got {zeta}")));
    }
    if targets.is_empty() {
        return Err(Error::invalid("alpha limit needs at least one target"));
    }
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let var = targets.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
    Ok(zeta * var)
}

/// Big-M constant: the metric applied to the standardized domain widths.
/// It dominates the distance between any two points of the domain.
pub fn big_m(grid: &IntervalGrid, std: &Standardizer, metric: Metric) -> f64 {
    metric.aggregate(
        grid.dims
            .iter()
            .enumerate()
            .map(|(i, d)| (d.upper - d.lower) / std.std[i]),
    )
}

/// Projection of standardized point `reference` onto a standardized box.
pub fn project_onto_box(reference: &[f64], zbox: &[(f64, f64)]) -> Vec<f64> {
    reference
        .iter()
        .zip(zbox)
        .map(|(&r, &(lo, hi))| r.clamp(lo, hi))
        .collect()
}

/// Minimum distance from a point of the standardized box to `reference`;
/// attained at the clamped projection.
#[inline]
pub fn min_dist_to_zbox(reference: &[f64], zbox: &[(f64, f64)], metric: Metric) -> f64 {
    metric.aggregate(reference.iter().zip(zbox).map(|(&r, &(lo, hi))| {
        if r < lo {
            lo - r
        } else if r > hi {
            r - hi
        } else {
            0.0
        }
    }))
}

/// Maximum distance from a point of the standardized box to `reference`;
/// attained at the farthest corner.
#[inline]
pub fn max_dist_to_zbox(reference: &[f64], zbox: &[(f64, f64)], metric: Metric) -> f64 {
    metric.aggregate(
        reference
            .iter()
            .zip(zbox)
            .map(|(&r, &(lo, hi))| (hi - r).abs().max((r - lo).abs())),
    )
}

/// [`min_dist_to_zbox`] for a box given in raw coordinates.
pub fn min_dist_to_box(reference: &[f64], extents: &[(f64, f64)], std: &Standardizer, metric: Metric) -> f64 {
    min_dist_to_zbox(reference, &std.standardize_box(extents), metric)
}

/// [`max_dist_to_zbox`] for a box given in raw coordinates.
pub fn max_dist_to_box(reference: &[f64], extents: &[(f64, f64)], std: &Standardizer, metric: Metric) -> f64 {
    max_dist_to_zbox(reference, &std.standardize_box(extents), metric)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const BOTH: [Metric; 2] = [Metric::SquaredEuclidean, Metric::Manhattan];

    #[test]
    fn standardizer_moments() {
        let ds = Dataset::new(vec![vec![0.0, 5.0], vec![2.0, 5.0]], vec![0.0, 0.0]).unwrap();
        let s = Standardizer::fit(&ds).unwrap();
        assert_eq!(s.mean, vec![1.0, 5.0]);
        assert_eq!(s.std, vec![1.0, 1.0]);
    }

    #[test]
    fn standardizer_on_standardized_data_is_identity() {
        let ds = Dataset::new(vec![vec![-1.0], vec![1.0], vec![-1.0], vec![1.0]], vec![0.0; 4]).unwrap();
        let s = Standardizer::fit(&ds).unwrap();
        for x in [-3.0, 0.2, 7.5] {
            assert_relative_eq!(s.standardize(&[x])[0], x, epsilon = 1e-12);
        }
    }

    #[test]
    fn distance_examples() {
        let s = Standardizer::new(vec![1.0], vec![1.0]).unwrap();
        for m in BOTH {
            assert_eq!(distance(&[1.0], &[0.0], &s, m).unwrap(), 0.0);
            assert_eq!(distance(&[1.0], &[-1.0], &s, m).unwrap(), 1.0);
            assert_eq!(distance(&[1.0], &[1.0], &s, m).unwrap(), 1.0);
        }
        let id = Standardizer::identity(2);
        assert_eq!(distance(&[1.0, 1.0], &[0.0, 0.0], &id, Metric::Manhattan).unwrap(), 2.0);
        assert_eq!(distance(&[1.0, 1.0], &[0.0, 0.0], &id, Metric::SquaredEuclidean).unwrap(), 2.0);
        assert!(distance(&[1.0], &[0.0, 0.0], &id, Metric::Manhattan).is_err());
    }

    #[test]
    fn min_distance_examples() {
        let id = Standardizer::identity(1);
        let refs = ReferenceSet::new(vec![vec![-1.0], vec![1.0]], RefKind::Data).unwrap();
        assert_eq!(min_distance(&[0.5], &refs, &id, Metric::Manhattan).unwrap(), 0.5);
        assert_eq!(min_distance(&[0.5], &refs, &id, Metric::SquaredEuclidean).unwrap(), 0.25);
        let single = ReferenceSet::new(vec![vec![3.0]], RefKind::Data).unwrap();
        assert_eq!(
            min_distance(&[0.5], &single, &id, Metric::Manhattan).unwrap(),
            distance(&[0.5], &[3.0], &id, Metric::Manhattan).unwrap()
        );
    }

    #[test]
    fn data_points_have_zero_uncertainty() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.gen_range(-3.0..9.0), rng.gen_range(0.0..1.0)]).collect();
        let ds = Dataset::new(x.clone(), vec![0.0; 30]).unwrap();
        let s = Standardizer::fit(&ds).unwrap();
        let refs = ReferenceSet::from_data(&ds, &s).unwrap();
        for m in BOTH {
            for p in &x {
                assert!(min_distance(p, &refs, &s, m).unwrap() < 1e-24);
            }
        }
    }

    #[test]
    fn alpha_limit_examples() {
        assert_eq!(alpha_limit(0.5, &[-2.0, 2.0]).unwrap(), 2.0);
        assert_eq!(alpha_limit(0.0, &[-2.0, 2.0]).unwrap(), 0.0);
        assert_eq!(alpha_limit(3.0, &[1.5, 1.5, 1.5]).unwrap(), 0.0);
        assert!(alpha_limit(-1.0, &[0.0]).is_err());
    }

    #[test]
    fn big_m_examples() {
        use crate::tree::TreeEnsemble;
        let ens1 = TreeEnsemble::new(vec![], 0.0, 1).unwrap();
        let g1 = IntervalGrid::build(&ens1, &[(0.0, 10.0)]).unwrap();
        let s1 = Standardizer::new(vec![0.0], vec![2.0]).unwrap();
        assert_eq!(big_m(&g1, &s1, Metric::Manhattan), 5.0);
        assert_eq!(big_m(&g1, &s1, Metric::SquaredEuclidean), 25.0);
        let ens2 = TreeEnsemble::new(vec![], 0.0, 2).unwrap();
        let g2 = IntervalGrid::build(&ens2, &[(0.0, 10.0), (0.0, 10.0)]).unwrap();
        let s2 = Standardizer::new(vec![0.0, 0.0], vec![2.0, 2.0]).unwrap();
        assert_eq!(big_m(&g2, &s2, Metric::Manhattan), 10.0);
        assert_eq!(big_m(&g2, &s2, Metric::SquaredEuclidean), 50.0);
    }

    #[test]
    fn box_distance_examples() {
        let id = Standardizer::identity(2);
        let unit = [(0.0, 1.0), (0.0, 1.0)];
        assert_eq!(project_onto_box(&[3.0, -1.0], &unit), vec![1.0, 0.0]);
        assert_eq!(min_dist_to_box(&[3.0, -1.0], &unit, &id, Metric::SquaredEuclidean), 5.0);
        assert_eq!(min_dist_to_box(&[3.0, -1.0], &unit, &id, Metric::Manhattan), 3.0);
        assert_eq!(min_dist_to_box(&[0.3, 0.9], &unit, &id, Metric::Manhattan), 0.0);
        let id1 = Standardizer::identity(1);
        assert_eq!(max_dist_to_box(&[0.25], &[(0.0, 1.0)], &id1, Metric::Manhattan), 0.75);
        assert_eq!(max_dist_to_box(&[0.5, 0.5], &unit, &id, Metric::Manhattan), 1.0);
        assert_eq!(max_dist_to_box(&[0.5, 0.5], &unit, &id, Metric::SquaredEuclidean), 0.5);
    }

    #[test]
    fn max_distance_equals_corner_maximum() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let s = Standardizer::new(
                (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                (0..3).map(|_| rng.gen_range(0.2..3.0)).collect(),
            )
            .unwrap();
            let ext: Vec<(f64, f64)> = (0..3)
                .map(|_| {
                    let a: f64 = rng.gen_range(-5.0..5.0);
                    (a, a + rng.gen_range(0.01..4.0))
                })
                .collect();
            let r: Vec<f64> = (0..3).map(|_| rng.gen_range(-4.0..4.0)).collect();
            for m in BOTH {
                let corners = (0..8u32)
                    .map(|mask| {
                        let c: Vec<f64> = (0..3)
                            .map(|i| if mask >> i & 1 == 1 { ext[i].1 } else { ext[i].0 })
                            .collect();
                        distance(&c, &r, &s, m).unwrap()
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
                assert_relative_eq!(max_dist_to_box(&r, &ext, &s, m), corners, max_relative = 1e-12);
            }
        }
    }
}
