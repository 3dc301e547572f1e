//! The sequential optimization loop and the studies built on it.

pub mod driver;
pub mod study;
pub mod trace;

pub use driver::{
    assemble_problem, build_problem, check_bounds, next_query, propose, random_acq_optimize, run_campaign, sample_uniform, BOConfig,
    BlackBox, Proposal,
};
pub use study::{quantile, relative_error, uncertainty_study, StudyConfig, StudyReport, StudyRow, StudySummary};
pub use trace::{Phase, SolveSummary, Trace, TraceRow};
