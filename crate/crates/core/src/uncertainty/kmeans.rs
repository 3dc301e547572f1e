//! Lloyd's k-means with seeded uniform initialization.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::uncertainty::distance::{RefKind, ReferenceSet};

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub centers: ReferenceSet,
    pub assignment: Vec<usize>,
    pub iterations: usize,
    /// Within-cluster sum of squares after each iteration.
    pub inertia_history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centers.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

/// Clusters standardized points into `k` centers. Initial centers are `k`
/// distinct points drawn uniformly without replacement; iteration stops at
/// an assignment fixpoint or after `max_iters` updates.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iters: usize) -> Result<KMeansResult> {
    if k == 0 || k > points.len() {
        return Err(Error::invalid(format!(
            "k = {k} out of range for {} points",
            points.len()
        )));
    }
    let dim = points[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut init = index::sample(&mut rng, points.len(), k).into_vec();
    init.sort_unstable();
    let mut centers: Vec<Vec<f64>> = init.iter().map(|&i| points[i].clone()).collect();
    let mut assignment: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
    let mut inertia_history = Vec::new();
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for j in 0..k {
            // An emptied cluster keeps its previous center.
            if counts[j] > 0 {
                centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
        inertia_history.push(
            points
                .iter()
                .zip(&next)
                .map(|(p, &a)| sq_dist(p, &centers[a]))
                .sum(),
        );
        let changed = next != assignment;
        assignment = next;
        if !changed {
            break;
        }
    }
    Ok(KMeansResult {
        centers: ReferenceSet::new(centers, RefKind::Cluster)?,
        assignment,
        iterations,
        inertia_history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_points(seed: u64, n: usize, dim: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect()
    }

    #[test]
    fn k_equals_n_reproduces_points() {
        let pts = random_points(1, 12, 2);
        let res = kmeans(&pts, 12, 5, 100).unwrap();
        let mut centers = res.centers.points.clone();
        let mut sorted = pts.clone();
        centers.sort_by(|a, b| a[0].total_cmp(&b[0]));
        sorted.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(centers, sorted);
    }

    #[test]
    fn single_cluster_is_mean() {
        let pts = random_points(2, 40, 3);
        let res = kmeans(&pts, 1, 0, 10).unwrap();
        for d in 0..3 {
            let mean = pts.iter().map(|p| p[d]).sum::<f64>() / 40.0;
            assert!((res.centers.points[0][d] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn inertia_non_increasing() {
        for seed in 0..10 {
            let pts = random_points(100 + seed, 200, 2);
            let res = kmeans(&pts, 7, seed, 100).unwrap();
            // Inertia of the seeded start, before any update.
            let init = index::sample(&mut ChaCha8Rng::seed_from_u64(seed), 200, 7).into_vec();
            let init_centers: Vec<Vec<f64>> = init.iter().map(|&i| pts[i].clone()).collect();
            let start: f64 = pts.iter().map(|p| sq_dist(p, &init_centers[nearest(p, &init_centers)])).sum();
            let mut prev = start;
            for &v in &res.inertia_history {
                assert!(v <= prev + 1e-9, "{v} > {prev}");
                prev = v;
            }
        }
    }

    #[test]
    fn deterministic_and_range_checked() {
        let pts = random_points(3, 50, 2);
        let a = kmeans(&pts, 4, 9, 50).unwrap();
        let b = kmeans(&pts, 4, 9, 50).unwrap();
        assert_eq!(a.centers, b.centers);
        assert!(kmeans(&pts, 0, 0, 5).is_err());
        assert!(kmeans(&pts, 51, 0, 5).is_err());
    }
}
