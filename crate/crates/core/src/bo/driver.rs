use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bo::trace::{Phase, SolveSummary, Trace, TraceRow};
use crate::error::{Error, Result};
use crate::solver::{solve, AcquisitionProblem, Mode, SolveResult, SolverConfig};
use crate::tree::{train, CellBox, GbrtParams, GriddedEnsemble, TreeEnsemble};
use crate::uncertainty::{alpha_limit, kmeans, Dataset, Metric, ReferenceSet, Standardizer};

/// Anything that maps a point to an observed objective value.
pub trait BlackBox {
    fn evaluate(&mut self, x: &[f64]) -> Result<f64>;
}

impl<F: FnMut(&[f64]) -> f64> BlackBox for F {
    fn evaluate(&mut self, x: &[f64]) -> Result<f64> {
        let v = self(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::BlackBox(format!("non-finite value {v}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BOConfig {
    /// Total number of black-box evaluations, initial design included.
    pub budget: usize,
    pub init_points: usize,
    pub kappa: f64,
    pub zeta: f64,
    pub mode: Mode,
    pub metric: Metric,
    pub gbrt: GbrtParams,
    /// Number of k-means centers in cluster-penalty mode; defaults to
    /// `⌈√n⌉` for `n` observations.
    pub cluster_count: Option<usize>,
    pub solver: SolverConfig,
    pub seed: u64,
}

impl Default for BOConfig {
    fn default() -> Self {
        BOConfig {
            budget: 300,
            init_points: 50,
            kappa: 1.96,
            zeta: 0.5,
            mode: Mode::Explore,
            metric: Metric::SquaredEuclidean,
            gbrt: GbrtParams::default(),
            cluster_count: None,
            solver: SolverConfig::default(),
            seed: 0,
        }
    }
}

impl BOConfig {
    pub fn validate(&self) -> Result<()> {
        if self.init_points == 0 || self.init_points >= self.budget {
            return Err(Error::invalid(format!(
                "need 0 < init_points < budget, got init_points = {} and budget = {}",
                self.init_points, self.budget
            )));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::invalid("kappa must be finite and >= 0"));
        }
        if !(self.zeta >= 0.0 && self.zeta.is_finite()) {
            return Err(Error::invalid("zeta must be finite and >= 0"));
        }
        if self.cluster_count == Some(0) {
            return Err(Error::invalid("cluster_count must be at least 1"));
        }
        self.gbrt.validate()?;
        self.solver.validate()
    }
}

pub fn check_bounds(bounds: &[(f64, f64)]) -> Result<()> {
    if bounds.is_empty() {
        return Err(Error::invalid("no bounds given"));
    }
    for (i, &(lo, hi)) in bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid(format!("bounds of dimension {i} are invalid: [{lo}, {hi}]")));
        }
    }
    Ok(())
}

/// A uniform point in the box. Shared by the initial design, random search
/// and the random acquisition optimizer.
pub fn sample_uniform<R: Rng>(rng: &mut R, bounds: &[(f64, f64)]) -> Vec<f64> {
    bounds
        .iter()
        .map(|&(lo, hi)| (lo + (hi - lo) * rng.gen::<f64>()).min(hi))
        .collect()
}

/// Trains the surrogate and assembles the acquisition problem for `config.mode`.
pub fn build_problem(dataset: &Dataset, bounds: &[(f64, f64)], config: &BOConfig) -> Result<AcquisitionProblem> {
    check_bounds(bounds)?;
    if dataset.is_empty() {
        return Err(Error::invalid("cannot build a surrogate from an empty dataset"));
    }
    if dataset.num_features() != bounds.len() {
        return Err(Error::DimensionMismatch {
            expected: bounds.len(),
            got: dataset.num_features(),
        });
    }
    let ensemble = train(dataset, &config.gbrt)?;
    assemble_problem(dataset, bounds, config, ensemble)
}

/// Assembles the acquisition problem around an already trained ensemble.
pub fn assemble_problem(
    dataset: &Dataset,
    bounds: &[(f64, f64)],
    config: &BOConfig,
    ensemble: TreeEnsemble,
) -> Result<AcquisitionProblem> {
    check_bounds(bounds)?;
    if dataset.is_empty() {
        return Err(Error::invalid("the dataset is empty"));
    }
    if dataset.num_features() != bounds.len() || ensemble.num_features != bounds.len() {
        return Err(Error::DimensionMismatch {
            expected: bounds.len(),
            got: if ensemble.num_features != bounds.len() {
                ensemble.num_features
            } else {
                dataset.num_features()
            },
        });
    }
    let model = GriddedEnsemble::new(ensemble, bounds)?;
    let std = Standardizer::fit(dataset)?;
    let refs = match config.mode {
        Mode::ClusterPenalty => {
            let points: Vec<Vec<f64>> = dataset.x.iter().map(|x| std.standardize(x)).collect();
            let k = config
                .cluster_count
                .unwrap_or_else(|| (dataset.len() as f64).sqrt().ceil() as usize)
                .clamp(1, dataset.len());
            kmeans(&points, k, config.seed, 100)?.centers
        }
        _ => ReferenceSet::from_data(dataset, &std)?,
    };
    let limit = match config.mode {
        Mode::Explore => Some(alpha_limit(config.zeta, &dataset.y)?),
        _ => None,
    };
    AcquisitionProblem::new(config.mode, model, refs, std, config.metric, config.kappa, limit)
}

#[derive(Debug, Clone)]
pub struct Proposal {
    pub x_next: Vec<f64>,
    pub result: SolveResult,
    /// Set when the solver's point duplicated an observation and was moved.
    pub adjusted: bool,
}

/// Next query point: the acquisition minimizer for the current data.
pub fn propose(dataset: &Dataset, bounds: &[(f64, f64)], config: &BOConfig) -> Result<Proposal> {
    config.solver.validate()?;
    let problem = build_problem(dataset, bounds, config)?;
    let result = solve(&problem, &config.solver)?;
    Ok(Proposal {
        x_next: result.x_next.clone(),
        result,
        adjusted: false,
    })
}

/// [`propose`] followed by the duplicate guard: a proposal within 1e-9
/// (standardized Manhattan) of an observation moves to the nearest unsampled
/// midpoint among its cell and the cells adjacent to it, or else to a seeded
/// random point.
pub fn next_query(dataset: &Dataset, bounds: &[(f64, f64)], config: &BOConfig) -> Result<Proposal> {
    config.solver.validate()?;
    let problem = build_problem(dataset, bounds, config)?;
    let result = solve(&problem, &config.solver)?;
    let (x_next, adjusted) = deduplicate(&result.x_next, dataset, &problem, config.seed);
    Ok(Proposal {
        x_next,
        result,
        adjusted,
    })
}

const DUPLICATE_TOLERANCE: f64 = 1e-9;

fn std_manhattan(a: &[f64], b: &[f64], std: &Standardizer) -> f64 {
    a.iter()
        .zip(b)
        .zip(&std.std)
        .map(|((x, y), s)| ((x - y) / s).abs())
        .sum()
}

fn is_duplicate(x: &[f64], dataset: &Dataset, std: &Standardizer) -> bool {
    dataset
        .x
        .iter()
        .any(|p| std_manhattan(x, p, std) <= DUPLICATE_TOLERANCE)
}

fn deduplicate(x: &[f64], dataset: &Dataset, problem: &AcquisitionProblem, seed: u64) -> (Vec<f64>, bool) {
    let std = &problem.std;
    if !is_duplicate(x, dataset, std) {
        return (x.to_vec(), false);
    }
    let grid = problem.model.grid();
    let home = grid.cell_of(x);
    let mut cells = vec![home.clone()];
    for d in 0..x.len() {
        let m = grid.dims[d].m();
        if home.lo[d] > 0 {
            let mut c = home.clone();
            c.lo[d] -= 1;
            c.hi[d] -= 1;
            cells.push(c);
        }
        if home.lo[d] < m {
            let mut c = home.clone();
            c.lo[d] += 1;
            c.hi[d] += 1;
            cells.push(c);
        }
    }
    let mut mids: Vec<(f64, Vec<f64>)> = cells
        .iter()
        .map(|c: &CellBox| {
            let mid = grid.midpoint(c);
            (std_manhattan(&mid, x, std), mid)
        })
        .collect();
    mids.sort_by(|a, b| a.0.total_cmp(&b.0));
    if let Some((_, mid)) = mids.into_iter().find(|(_, m)| !is_duplicate(m, dataset, std)) {
        return (mid, true);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (dataset.len() as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let bounds = grid.bounds();
    loop {
        let p = sample_uniform(&mut rng, &bounds);
        if !is_duplicate(&p, dataset, std) {
            return (p, true);
        }
    }
}

/// Runs a full campaign: `init_points` uniform samples, then proposals until
/// `budget` evaluations. A black-box failure stops the campaign and is
/// recorded in [`Trace::aborted`].
pub fn run_campaign(blackbox: &mut dyn BlackBox, bounds: &[(f64, f64)], config: &BOConfig) -> Result<Trace> {
    check_bounds(bounds)?;
    config.validate()?;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trace = Trace::new(bounds.len());
    let mut data = Dataset::empty();
    let mut cfg = config.clone();

    for iter in 0..config.budget {
        let (phase, x, solve) = if iter < config.init_points {
            (Phase::Init, sample_uniform(&mut rng, bounds), None)
        } else {
            cfg.solver.seed = config.seed.wrapping_add(iter as u64);
            let p = next_query(&data, bounds, &cfg)?;
            (Phase::Optimize, p.x_next, Some(SolveSummary::from(&p.result)))
        };
        let f = match blackbox.evaluate(&x) {
            Ok(f) if f.is_finite() => f,
            Ok(f) => {
                trace.aborted = Some(format!("iteration {iter}: non-finite value {f}"));
                break;
            }
            Err(e) => {
                trace.aborted = Some(format!("iteration {iter}: {e}"));
                break;
            }
        };
        data.push(x.clone(), f)?;
        trace.push(TraceRow {
            iter,
            phase,
            best: trace.best().map_or(f, |b| b.min(f)),
            x,
            f,
            solve,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(trace)
}

/// Random-sampling acquisition optimizer: the best of `n_samples` seeded
/// uniform points.
pub fn random_acq_optimize(problem: &AcquisitionProblem, n_samples: usize, seed: u64) -> Result<(Vec<f64>, f64)> {
    if n_samples == 0 {
        return Err(Error::invalid("n_samples must be at least 1"));
    }
    let bounds = problem.bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for _ in 0..n_samples {
        let x = sample_uniform(&mut rng, &bounds);
        let v = problem.evaluate(&x)?;
        if best.as_ref().is_none_or(|(_, b)| v < *b) {
            best = Some((x, v));
        }
    }
    Ok(best.expect("at least one sample"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::make_benchmark;
    use crate::solver::warm_start;

    fn small_config(mode: Mode) -> BOConfig {
        BOConfig {
            budget: 30,
            init_points: 20,
            mode,
            gbrt: GbrtParams {
                num_trees: 30,
                min_samples_leaf: 3,
                ..GbrtParams::default()
            },
            solver: SolverConfig {
                max_nodes: Some(2000),
                ..SolverConfig::default()
            },
            seed: 101,
            ..BOConfig::default()
        }
    }

    #[test]
    fn campaign_shape_and_determinism() {
        let mut b = make_benchmark("sphere", 2).unwrap();
        let bounds = b.bounds.clone();
        let cfg = small_config(Mode::Explore);
        let t = run_campaign(&mut b, &bounds, &cfg).unwrap();
        assert_eq!(t.len(), 30);
        assert!(t.rows[..20].iter().all(|r| r.phase == Phase::Init));
        assert!(t.rows[20..].iter().all(|r| r.phase == Phase::Optimize && r.solve.is_some()));
        for w in t.rows.windows(2) {
            assert!(w[1].best <= w[0].best);
        }
        for r in &t.rows {
            assert!(r.x.iter().zip(&bounds).all(|(v, &(lo, hi))| lo <= *v && *v <= hi));
            assert_eq!(r.f, b.eval(&r.x));
        }
        let again = run_campaign(&mut b, &bounds, &cfg).unwrap();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        t.write_csv(&mut x, false).unwrap();
        again.write_csv(&mut y, false).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn init_design_matches_random_search() {
        let mut b = make_benchmark("rastrigin", 3).unwrap();
        let bounds = b.bounds.clone();
        let cfg = small_config(Mode::Penalty);
        let t = run_campaign(&mut b, &bounds, &cfg).unwrap();
        let rs = crate::benchmarks::random_search(&b, 20, cfg.seed).unwrap();
        for (a, r) in t.rows.iter().zip(&rs.rows) {
            assert_eq!(a.x, r.x);
        }
    }

    #[test]
    fn failing_black_box_aborts() {
        let mut calls = 0;
        let mut bb = |x: &[f64]| {
            calls += 1;
            if calls > 5 {
                f64::NAN
            } else {
                x[0]
            }
        };
        let t = run_campaign(&mut bb, &[(0.0, 1.0)], &small_config(Mode::Explore)).unwrap();
        assert_eq!(t.len(), 5);
        assert!(t.aborted.is_some());
    }

    #[test]
    fn sandwich_and_dedup() {
        let b = make_benchmark("sphere", 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut ds = Dataset::empty();
        for _ in 0..40 {
            let x = sample_uniform(&mut rng, &b.bounds);
            ds.push(x.clone(), b.eval(&x)).unwrap();
        }
        for mode in [Mode::Penalty, Mode::Explore, Mode::ClusterPenalty] {
            let cfg = small_config(mode);
            let problem = build_problem(&ds, &b.bounds, &cfg).unwrap();
            let res = solve(&problem, &SolverConfig::default()).unwrap();
            let (_, rnd) = random_acq_optimize(&problem, 2000, 1).unwrap();
            // Random sampling need not beat the warm start in penalty modes:
            // the warm start sits on a reference where the penalty vanishes.
            let (_, ws) = warm_start(&problem, 0);
            assert!(res.upper_bound <= rnd + 1e-12 && res.upper_bound <= ws, "{mode}");
            let (x1, v1) = random_acq_optimize(&problem, 1, 9).unwrap();
            assert_eq!(problem.evaluate(&x1).unwrap(), v1);
        }
        // A duplicate proposal moves to a fresh midpoint.
        let cfg = small_config(Mode::Penalty);
        let problem = build_problem(&ds, &b.bounds, &cfg).unwrap();
        let (moved, adjusted) = deduplicate(&ds.x[0], &ds, &problem, 0);
        assert!(adjusted);
        assert!(!is_duplicate(&moved, &ds, &problem.std));
        let (same, adjusted) = deduplicate(&[0.123, 0.456], &ds, &problem, 0);
        assert!(!adjusted);
        assert_eq!(same, vec![0.123, 0.456]);
    }

    #[test]
    fn config_validation() {
        let mut c = BOConfig::default();
        assert!(c.validate().is_ok());
        c.init_points = 300;
        assert!(c.validate().is_err());
        let c = BOConfig {
            kappa: -1.0,
            ..BOConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
