use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::GriddedEnsemble;
use crate::uncertainty::distance::min_distance_unchecked;
use crate::uncertainty::{big_m, Metric, RefKind, ReferenceSet, Standardizer};

/// Which acquisition function is minimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// `μ̂(x) − κ·min(α_limit, dist(x))`: lower confidence bound, favours
    /// regions far from the data.
    Explore,
    /// `μ̂(x) + κ·dist(x)` with data points as references: stays close to
    /// what has been observed.
    Penalty,
    /// As [`Mode::Penalty`], with k-means centers as references.
    ClusterPenalty,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Explore => "explore",
            Mode::Penalty => "penalty",
            Mode::ClusterPenalty => "cluster-penalty",
        }
    }

    pub fn is_penalty(self) -> bool {
        !matches!(self, Mode::Explore)
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "explore" => Ok(Mode::Explore),
            "penalty" => Ok(Mode::Penalty),
            "cluster-penalty" => Ok(Mode::ClusterPenalty),
            other => Err(Error::invalid(format!("unknown mode {other:?}"))),
        }
    }
}

/// A fully specified acquisition minimization problem over the box domain
/// of the model's grid.
#[derive(Debug, Clone)]
pub struct AcquisitionProblem {
    pub mode: Mode,
    pub model: GriddedEnsemble,
    pub refs: ReferenceSet,
    pub std: Standardizer,
    pub metric: Metric,
    pub kappa: f64,
    /// Upper clamp on the uncertainty term; only used in explore mode.
    pub alpha_limit: f64,
    /// Big-M constant of the explicit formulation; used by the exporter.
    pub big_m: f64,
}

impl AcquisitionProblem {
    pub fn new(
        mode: Mode,
        model: GriddedEnsemble,
        refs: ReferenceSet,
        std: Standardizer,
        metric: Metric,
        kappa: f64,
        alpha_limit: Option<f64>,
    ) -> Result<Self> {
        let n = model.grid().num_dims();
        if refs.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: refs.dim(),
            });
        }
        if std.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: std.dim(),
            });
        }
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(Error::invalid(format!("kappa must be finite and >= 0, got {kappa}")));
        }
        let expected_kind = if mode == Mode::ClusterPenalty {
            RefKind::Cluster
        } else {
            RefKind::Data
        };
        if refs.kind != expected_kind {
            return Err(Error::invalid(format!(
                "{mode} mode needs {expected_kind:?} references, got {:?}",
                refs.kind
            )));
        }
        let alpha_limit = match (mode, alpha_limit) {
            (Mode::Explore, Some(a)) if a >= 0.0 && a.is_finite() => a,
            (Mode::Explore, _) => {
                return Err(Error::invalid("explore mode needs a finite, non-negative alpha limit"))
            }
            (_, _) => f64::INFINITY,
        };
        let big_m = big_m(model.grid(), &std, metric);
        Ok(AcquisitionProblem {
            mode,
            model,
            refs,
            std,
            metric,
            kappa,
            alpha_limit,
            big_m,
        })
    }

    pub fn dim(&self) -> usize {
        self.model.grid().num_dims()
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.model.grid().bounds()
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        for (dim, (&value, d)) in x.iter().zip(&self.model.grid().dims).enumerate() {
            if !(value >= d.lower && value <= d.upper) {
                return Err(Error::OutOfBounds {
                    dim,
                    value,
                    lower: d.lower,
                    upper: d.upper,
                });
            }
        }
        Ok(())
    }

    /// The uncertainty term α(x): distance to the closest reference, clamped
    /// at the alpha limit in explore mode.
    pub fn uncertainty(&self, x: &[f64]) -> f64 {
        let d = min_distance_unchecked(x, &self.refs, &self.std, self.metric);
        match self.mode {
            Mode::Explore => d.min(self.alpha_limit),
            _ => d,
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        Ok(self.evaluate_unchecked(x))
    }

    pub(crate) fn evaluate_unchecked(&self, x: &[f64]) -> f64 {
        let mu = self.model.ensemble().predict_unchecked(x);
        if self.kappa == 0.0 {
            return mu;
        }
        let alpha = self.uncertainty(x);
        match self.mode {
            Mode::Explore => mu - self.kappa * alpha,
            _ => mu + self.kappa * alpha,
        }
    }

    /// Combines a prediction bound with an uncertainty-term bound according
    /// to the sign of the uncertainty term in this mode.
    pub(crate) fn combine(&self, mu_bound: f64, alpha_bound: f64) -> f64 {
        if self.kappa == 0.0 {
            return mu_bound;
        }
        match self.mode {
            Mode::Explore => mu_bound - self.kappa * alpha_bound,
            _ => mu_bound + self.kappa * alpha_bound,
        }
    }
}
