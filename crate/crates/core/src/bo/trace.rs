use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::{SolveResult, Termination};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Init,
    Optimize,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Init => "init",
            Phase::Optimize => "optimize",
        }
    }
}

/// Solver statistics of one proposal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub upper_bound: f64,
    pub lower_bound: f64,
    pub rel_gap: f64,
    pub nodes: u64,
    pub termination: Termination,
}

impl From<&SolveResult> for SolveSummary {
    fn from(r: &SolveResult) -> Self {
        SolveSummary {
            upper_bound: r.upper_bound,
            lower_bound: r.lower_bound,
            rel_gap: r.rel_gap,
            nodes: r.nodes_explored,
            termination: r.termination,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub phase: Phase,
    pub x: Vec<f64>,
    pub f: f64,
    pub best: f64,
    pub solve: Option<SolveSummary>,
    /// Wall-clock seconds since the start of the run.
    pub seconds: f64,
}

/// Per-evaluation record of a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub dim: usize,
    pub rows: Vec<TraceRow>,
    /// Set when the black box failed and the campaign stopped early.
    pub aborted: Option<String>,
}

impl Trace {
    pub fn new(dim: usize) -> Self {
        Trace {
            dim,
            rows: Vec::new(),
            aborted: None,
        }
    }

    pub fn push(&mut self, row: TraceRow) {
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn best(&self) -> Option<f64> {
        self.rows.last().map(|r| r.best)
    }

    /// Best value among the rows of a phase.
    pub fn best_in(&self, phase: Phase) -> Option<f64> {
        self.rows
            .iter()
            .filter(|r| r.phase == phase)
            .map(|r| r.f)
            .reduce(f64::min)
    }

    pub fn header(dim: usize) -> Vec<String> {
        let mut h = vec!["iter".to_string(), "phase".to_string()];
        h.extend((0..dim).map(|i| format!("x_{i}")));
        h.extend(
            ["f", "best", "ub", "lb", "gap", "nodes", "seconds"]
                .iter()
                .map(|s| s.to_string()),
        );
        h
    }

    /// Writes the trace as CSV. Solver columns are empty on initial-design
    /// rows. Timings are written as 0 unless `timings` is set, so that
    /// reruns produce identical files.
    pub fn write_csv<W: Write>(&self, writer: W, timings: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(Self::header(self.dim))?;
        for r in &self.rows {
            let mut rec = vec![r.iter.to_string(), r.phase.name().to_string()];
            rec.extend(r.x.iter().map(f64::to_string));
            rec.push(r.f.to_string());
            rec.push(r.best.to_string());
            match &r.solve {
                Some(s) => {
                    rec.push(s.upper_bound.to_string());
                    rec.push(s.lower_bound.to_string());
                    rec.push(s.rel_gap.to_string());
                    rec.push(s.nodes.to_string());
                }
                None => rec.extend(std::iter::repeat_n(String::new(), 4)),
            }
            rec.push(if timings { r.seconds.to_string() } else { "0".into() });
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<trace>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>, timings: bool) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(f, timings)
    }
}
