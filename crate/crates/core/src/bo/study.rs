//! How the penalty weight κ affects the surrogate's error at the proposed
//! point. For every seed a surrogate is trained on uniform samples, the
//! penalty-mode problem is solved for each κ, and the black box is queried
//! at the minimizer.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bo::driver::{build_problem, check_bounds, sample_uniform, BOConfig, BlackBox};
use crate::error::{Error, Result};
use crate::solver::{solve, Mode, SolverConfig};
use crate::tree::GbrtParams;
use crate::uncertainty::{Dataset, Metric};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub kappas: Vec<f64>,
    pub n_train: usize,
    pub seeds: Vec<u64>,
    pub metric: Metric,
    pub gbrt: GbrtParams,
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub seed: u64,
    pub kappa: f64,
    pub x_next: Vec<f64>,
    /// Surrogate prediction at `x_next`.
    pub mu: f64,
    pub f: f64,
    /// Relative model error; `None` when the prediction is exactly zero.
    pub epsilon: Option<f64>,
}

/// Order statistics of one κ. `q1`/`q3` are conventional quartiles (linear
/// interpolation between order statistics); `range_q1`/`range_q3` are
/// `min + range/4` and `min + 3·range/4`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub kappa: f64,
    pub n: usize,
    pub flagged: usize,
    pub eps_median: f64,
    pub eps_q1: f64,
    pub eps_q3: f64,
    pub eps_range_q1: f64,
    pub eps_range_q3: f64,
    pub mu_median: f64,
    pub mu_q1: f64,
    pub mu_q3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub rows: Vec<StudyRow>,
    pub summary: Vec<StudySummary>,
}

/// `|(μ̂ − f) / μ̂|`, undefined for `μ̂ = 0`.
pub fn relative_error(mu: f64, f: f64) -> Option<f64> {
    (mu != 0.0).then(|| ((mu - f) / mu).abs())
}

/// Quantile by linear interpolation between order statistics of a sorted sample.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

pub fn uncertainty_study(blackbox: &mut dyn BlackBox, bounds: &[(f64, f64)], config: &StudyConfig) -> Result<StudyReport> {
    check_bounds(bounds)?;
    if config.kappas.is_empty() {
        return Err(Error::invalid("kappa grid is empty"));
    }
    if config.kappas.iter().any(|k| !(*k >= 0.0 && k.is_finite())) {
        return Err(Error::invalid("kappa values must be finite and >= 0"));
    }
    if config.n_train == 0 || config.seeds.is_empty() {
        return Err(Error::invalid("study needs training points and at least one seed"));
    }
    let kappas = sorted(config.kappas.clone());
    let mut rows = Vec::new();
    for &seed in &config.seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Dataset::empty();
        for _ in 0..config.n_train {
            let x = sample_uniform(&mut rng, bounds);
            let f = blackbox.evaluate(&x)?;
            data.push(x, f)?;
        }
        let bo = BOConfig {
            mode: Mode::Penalty,
            metric: config.metric,
            kappa: kappas[0],
            gbrt: config.gbrt.clone(),
            seed,
            ..BOConfig::default()
        };
        let mut problem = build_problem(&data, bounds, &bo)?;
        for &kappa in &kappas {
            problem.kappa = kappa;
            let solver = SolverConfig {
                seed,
                ..config.solver.clone()
            };
            let res = solve(&problem, &solver)?;
            let mu = problem.model.ensemble().predict(&res.x_next)?;
            let f = blackbox.evaluate(&res.x_next)?;
            rows.push(StudyRow {
                seed,
                kappa,
                x_next: res.x_next,
                mu,
                f,
                epsilon: relative_error(mu, f),
            });
        }
    }
    let summary = kappas
        .iter()
        .map(|&kappa| {
            let at: Vec<&StudyRow> = rows.iter().filter(|r| r.kappa == kappa).collect();
            let eps = sorted(at.iter().filter_map(|r| r.epsilon).collect());
            let mus = sorted(at.iter().map(|r| r.mu).collect());
            let (lo, hi) = (eps.first().copied().unwrap_or(f64::NAN), eps.last().copied().unwrap_or(f64::NAN));
            StudySummary {
                kappa,
                n: eps.len(),
                flagged: at.len() - eps.len(),
                eps_median: quantile(&eps, 0.5),
                eps_q1: quantile(&eps, 0.25),
                eps_q3: quantile(&eps, 0.75),
                eps_range_q1: lo + (hi - lo) / 4.0,
                eps_range_q3: lo + 3.0 * (hi - lo) / 4.0,
                mu_median: quantile(&mus, 0.5),
                mu_q1: quantile(&mus, 0.25),
                mu_q3: quantile(&mus, 0.75),
            }
        })
        .collect();
    Ok(StudyReport { rows, summary })
}

impl StudyReport {
    pub const SUMMARY_HEADER: [&'static str; 11] = [
        "kappa",
        "n",
        "flagged",
        "eps_median",
        "eps_q1",
        "eps_q3",
        "eps_range_q1",
        "eps_range_q3",
        "mu_median",
        "mu_q1",
        "mu_q3",
    ];

    pub fn write_summary_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(Self::SUMMARY_HEADER)?;
        for s in &self.summary {
            w.write_record([
                s.kappa.to_string(),
                s.n.to_string(),
                s.flagged.to_string(),
                s.eps_median.to_string(),
                s.eps_q1.to_string(),
                s.eps_q3.to_string(),
                s.eps_range_q1.to_string(),
                s.eps_range_q3.to_string(),
                s.mu_median.to_string(),
                s.mu_q1.to_string(),
                s.mu_q3.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<study>", e))?;
        Ok(())
    }

    /// One row per seed and κ: `seed,kappa,x_0..,mu,f,epsilon` (empty
    /// epsilon marks a flagged row).
    pub fn write_rows_csv<W: Write>(&self, writer: W) -> Result<()> {
        let dim = self.rows.first().map_or(0, |r| r.x_next.len());
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["seed".to_string(), "kappa".to_string()];
        header.extend((0..dim).map(|i| format!("x_{i}")));
        header.extend(["mu", "f", "epsilon"].map(String::from));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.seed.to_string(), r.kappa.to_string()];
            rec.extend(r.x_next.iter().map(f64::to_string));
            rec.push(r.mu.to_string());
            rec.push(r.f.to_string());
            rec.push(r.epsilon.map(|e| e.to_string()).unwrap_or_default());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<study>", e))?;
        Ok(())
    }
}
