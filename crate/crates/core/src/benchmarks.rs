//! Synthetic black-box test functions and the pure random-search baseline.
//!
//! Textbook forms, with `n` the dimension:
//!
//! | name              | f(x)                                                          | domain           |
//! |-------------------|---------------------------------------------------------------|------------------|
//! | `rosenbrock`      | `Σ_{i<n−1} 100 (x_{i+1} − x_i²)² + (1 − x_i)²`                 | `[−2.048, 2.048]`|
//! | `rastrigin`       | `10 n + Σ x_i² − 10 cos(2π x_i)`                              | `[−5.12, 5.12]`  |
//! | `sphere`          | `Σ x_i²`                                                      | `[−5.12, 5.12]`  |
//! | `styblinski_tang` | `½ Σ x_i⁴ − 16 x_i² + 5 x_i`                                  | `[−5, 5]`        |
//! | `ackley`          | `−20 exp(−0.2 √(Σx_i²/n)) − exp(Σ cos(2π x_i)/n) + 20 + e`     | `[−5, 10]`       |

use std::f64::consts::{E, PI};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bo::{sample_uniform, BlackBox, Phase, Trace, TraceRow};
use crate::error::{Error, Result};

/// Per-dimension minimizer of Styblinski-Tang: the negative root of
/// `4x³ − 32x + 5`.
pub const STYBLINSKI_TANG_ARGMIN: f64 = -2.903_534_027_771_177_6;

pub const BENCHMARK_NAMES: [&str; 5] = ["rosenbrock", "rastrigin", "sphere", "styblinski_tang", "ackley"];

#[derive(Debug, Clone)]
pub struct Benchmark {
    pub name: &'static str,
    pub dim: usize,
    pub bounds: Vec<(f64, f64)>,
    f: fn(&[f64]) -> f64,
    /// Known global minimizer and value, for reporting.
    pub known_optimum: Option<(Vec<f64>, f64)>,
}

impl Benchmark {
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

impl BlackBox for Benchmark {
    fn evaluate(&mut self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(self.eval(x))
    }
}

fn rosenbrock(x: &[f64]) -> f64 {
    x.windows(2)
        .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
        .sum()
}

fn rastrigin(x: &[f64]) -> f64 {
    10.0 * x.len() as f64 + x.iter().map(|v| v * v - 10.0 * (2.0 * PI * v).cos()).sum::<f64>()
}

fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn styblinski_tang(x: &[f64]) -> f64 {
    0.5 * x.iter().map(|v| v.powi(4) - 16.0 * v * v + 5.0 * v).sum::<f64>()
}

fn ackley(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sq = x.iter().map(|v| v * v).sum::<f64>() / n;
    let cs = x.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>() / n;
    -20.0 * (-0.2 * sq.sqrt()).exp() - cs.exp() + 20.0 + E
}

pub fn make_benchmark(name: &str, dim: usize) -> Result<Benchmark> {
    if dim == 0 {
        return Err(Error::invalid("benchmark dimension must be at least 1"));
    }
    let (name, f, bound, argmin): (&'static str, fn(&[f64]) -> f64, (f64, f64), f64) = match name {
        "rosenbrock" => {
            if dim < 2 {
                return Err(Error::invalid("rosenbrock needs dimension >= 2"));
            }
            ("rosenbrock", rosenbrock, (-2.048, 2.048), 1.0)
        }
        "rastrigin" => ("rastrigin", rastrigin, (-5.12, 5.12), 0.0),
        "sphere" => ("sphere", sphere, (-5.12, 5.12), 0.0),
        "styblinski_tang" | "styblinski-tang" => {
            ("styblinski_tang", styblinski_tang, (-5.0, 5.0), STYBLINSKI_TANG_ARGMIN)
        }
        "ackley" => ("ackley", ackley, (-5.0, 10.0), 0.0),
        other => {
            return Err(Error::invalid(format!(
                "unknown benchmark {other:?} (available: {})",
                BENCHMARK_NAMES.join(", ")
            )))
        }
    };
    let xstar = vec![argmin; dim];
    let fstar = f(&xstar);
    Ok(Benchmark {
        name,
        dim,
        bounds: vec![bound; dim],
        f,
        known_optimum: Some((xstar, fstar)),
    })
}

/// Uniform random search. Points come from the same seeded stream as a
/// campaign's initial design, so with equal seeds the first rows coincide.
pub fn random_search(benchmark: &Benchmark, budget: usize, seed: u64) -> Result<Trace> {
    if budget == 0 {
        return Err(Error::invalid("budget must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = Trace::new(benchmark.dim);
    let start = Instant::now();
    for iter in 0..budget {
        let x = sample_uniform(&mut rng, &benchmark.bounds);
        let f = benchmark.eval(&x);
        trace.push(TraceRow {
            iter,
            phase: Phase::Init,
            best: trace.best().map_or(f, |b| b.min(f)),
            x,
            f,
            solve: None,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_minima() {
        for name in BENCHMARK_NAMES {
            for dim in [2, 5] {
                let b = make_benchmark(name, dim).unwrap();
                let (x, f) = b.known_optimum.clone().unwrap();
                assert!((b.eval(&x) - f).abs() < 1e-9);
                if name != "styblinski_tang" {
                    assert!(f.abs() < 1e-9, "{name}: {f}");
                }
            }
        }
        assert_eq!(make_benchmark("sphere", 3).unwrap().eval(&[0.0; 3]), 0.0);
        assert!(make_benchmark("ackley", 4).unwrap().eval(&[0.0; 4]).abs() < 1e-12);
    }

    #[test]
    fn styblinski_tang_minimizer() {
        // Newton iterations on the derivative reproduce the constant.
        let mut x: f64 = -3.0;
        for _ in 0..50 {
            x -= (4.0 * x.powi(3) - 32.0 * x + 5.0) / (12.0 * x * x - 32.0);
        }
        assert!((x - STYBLINSKI_TANG_ARGMIN).abs() < 1e-12);
        assert!((x + 2.903534).abs() < 1e-6);
        let b = make_benchmark("styblinski_tang", 3).unwrap();
        let (_, f) = b.known_optimum.unwrap();
        assert!((f / 3.0 + 39.16617).abs() < 1e-5);
    }

    #[test]
    fn invalid_requests() {
        assert!(make_benchmark("rosenbrock", 1).is_err());
        assert!(make_benchmark("sphere", 0).is_err());
        assert!(make_benchmark("branin", 2).is_err());
    }

    #[test]
    fn random_search_trace() {
        let b = make_benchmark("rastrigin", 3).unwrap();
        let t = random_search(&b, 1, 7).unwrap();
        assert_eq!(t.rows.len(), 1);
        let t = random_search(&b, 100, 7).unwrap();
        assert_eq!(t.rows.len(), 100);
        for w in t.rows.windows(2) {
            assert!(w[1].best <= w[0].best);
        }
        for r in &t.rows {
            assert!(r.x.iter().zip(&b.bounds).all(|(v, &(lo, hi))| lo <= *v && *v <= hi));
            assert_eq!(r.f, b.eval(&r.x));
        }
        assert!(random_search(&b, 0, 7).is_err());
    }
}
