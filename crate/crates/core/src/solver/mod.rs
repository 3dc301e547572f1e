//! Acquisition problems, their branch-and-bound solver and the explicit
//! mixed-integer export.

pub mod bnb;
pub mod export;
pub mod problem;

pub use bnb::{
    node_lower_bound, relative_gap, select_branch, solve, warm_start, BnBNode, Branch, GapRecord, SolveResult,
    SolverConfig, Termination,
};
pub use problem::{AcquisitionProblem, Mode};
