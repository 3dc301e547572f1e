//! Flat TOML configuration shared by all commands. Every key can also be
//! given as a command-line flag of the same name (with `-` for `_`); flags
//! win over the file, and the file wins over built-in defaults.
//!
//! ```toml
//! budget = 80
//! init_points = 50
//! kappa = 1.96
//! zeta = 0.5
//! mode = "explore"            # explore | penalty | cluster-penalty
//! metric = "squared-euclidean" # squared-euclidean | manhattan
//! cluster_count = 10
//! seed = 101
//! num_trees = 400
//! max_depth = 3
//! max_leaves = 5
//! min_samples_leaf = 20
//! learning_rate = 0.1
//! rel_gap = 1e-4
//! time_limit = 120.0
//! lookahead = 200
//! group_size = 20
//! refine_budget = 10000
//! max_nodes = 100000
//! ```

use std::path::Path;

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::bo::BOConfig;
use crate::error::{Error, Result};
use crate::solver::Mode;
use crate::uncertainty::Metric;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Total black-box evaluations, initial design included
    #[arg(long)]
    pub budget: Option<usize>,
    /// Uniform random points before the first proposal
    #[arg(long)]
    pub init_points: Option<usize>,
    /// Weight of the uncertainty term
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Exploration limit factor: alpha_limit = zeta * Var(y)
    #[arg(long)]
    pub zeta: Option<f64>,
    /// explore | penalty | cluster-penalty
    #[arg(long)]
    pub mode: Option<Mode>,
    /// squared-euclidean | manhattan
    #[arg(long)]
    pub metric: Option<Metric>,
    /// Number of k-means centers (cluster-penalty mode)
    #[arg(long)]
    pub cluster_count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub num_trees: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub max_leaves: Option<usize>,
    #[arg(long)]
    pub min_samples_leaf: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Relative optimality gap at which the solver stops
    #[arg(long)]
    pub rel_gap: Option<f64>,
    /// Solver time limit in seconds
    #[arg(long)]
    pub time_limit: Option<f64>,
    /// Candidate splits scored per branch-and-bound node
    #[arg(long)]
    pub lookahead: Option<usize>,
    /// Trees per group in the refined prediction bound (1 disables it)
    #[arg(long)]
    pub group_size: Option<usize>,
    #[arg(long)]
    pub refine_budget: Option<usize>,
    /// Cap on explored branch-and-bound nodes
    #[arg(long)]
    pub max_nodes: Option<u64>,
}

impl Settings {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::invalid(format!("{}: {}", path.display(), e.message())))
    }

    /// Values of `over` replace those of `self`.
    pub fn overlay(&self, over: &Settings) -> Settings {
        macro_rules! pick {
            ($($f:ident),*) => { Settings { $($f: over.$f.clone().or_else(|| self.$f.clone())),* } };
        }
        pick!(
            budget,
            init_points,
            kappa,
            zeta,
            mode,
            metric,
            cluster_count,
            seed,
            num_trees,
            max_depth,
            max_leaves,
            min_samples_leaf,
            learning_rate,
            rel_gap,
            time_limit,
            lookahead,
            group_size,
            refine_budget,
            max_nodes
        )
    }

    /// Applies the settings to `base`. Only the solver, training and
    /// acquisition parts are validated here; campaign sizes are checked by
    /// the commands that use them.
    pub fn apply(&self, base: &BOConfig) -> Result<BOConfig> {
        let mut c = base.clone();
        macro_rules! set {
            ($($src:ident => $($dst:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$src.clone() { c.$($dst).+ = v; })*
            };
        }
        set!(
            budget => budget,
            init_points => init_points,
            kappa => kappa,
            zeta => zeta,
            mode => mode,
            metric => metric,
            seed => seed,
            num_trees => gbrt.num_trees,
            max_depth => gbrt.max_depth,
            max_leaves => gbrt.max_leaves,
            min_samples_leaf => gbrt.min_samples_leaf,
            learning_rate => gbrt.learning_rate,
            rel_gap => solver.rel_gap,
            time_limit => solver.time_limit,
            lookahead => solver.lookahead,
            group_size => solver.group_size,
            refine_budget => solver.refine_budget,
        );
        if self.cluster_count.is_some() {
            c.cluster_count = self.cluster_count;
        }
        if self.max_nodes.is_some() {
            c.solver.max_nodes = self.max_nodes;
        }
        c.solver.seed = c.seed;
        c.gbrt.seed = c.seed;
        if !(c.kappa >= 0.0 && c.kappa.is_finite()) {
            return Err(Error::invalid("kappa must be finite and >= 0"));
        }
        if !(c.zeta >= 0.0 && c.zeta.is_finite()) {
            return Err(Error::invalid("zeta must be finite and >= 0"));
        }
        if c.cluster_count == Some(0) {
            return Err(Error::invalid("cluster_count must be at least 1"));
        }
        c.gbrt.validate()?;
        c.solver.validate()?;
        Ok(c)
    }
}

/// Parses `lo:hi,lo:hi,...`.
pub fn parse_bounds(s: &str) -> Result<Vec<(f64, f64)>> {
    s.split(',')
        .map(|part| {
            let (lo, hi) = part
                .split_once(':')
                .ok_or_else(|| Error::invalid(format!("bounds entry {part:?} is not lo:hi")))?;
            let parse = |v: &str| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::invalid(format!("cannot parse bound {v:?}")))
            };
            let (lo, hi) = (parse(lo)?, parse(hi)?);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid(format!("bounds entry {part:?} needs lo < hi")));
            }
            Ok((lo, hi))
        })
        .collect()
}

/// Parses a comma-separated list of numbers.
pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("cannot parse number {v:?}")))
        })
        .collect()
}

/// Parses seeds given as a comma-separated list of values and `a-b` ranges.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        let bad = || Error::invalid(format!("cannot parse seed {part:?}"));
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    Ok(out)
}
