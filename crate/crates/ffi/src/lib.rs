//! C ABI for loading tree-ensemble models, building acquisition problems and
//! solving them.
//!
//! Conventions:
//!
//! - Every fallible function returns a [`GbtStatus`]; `GBT_OK` is zero.
//! - Objects are opaque handles created by `*_new`/`*_load` functions and
//!   released with the matching `*_free` function. Freeing `NULL` is a no-op.
//! - On failure, [`gbt_last_error`] returns a message for the calling thread.
//!   The pointer stays valid until the next failing call on that thread.
//! - Arrays are passed as pointer + length; matrices are row-major.

#![allow(non_camel_case_types)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use gbtopt::bo::{assemble_problem, BOConfig};
use gbtopt::solver::{solve, AcquisitionProblem, Mode, SolverConfig, Termination};
use gbtopt::tree::{load_model, model_from_json, TreeEnsemble};
use gbtopt::uncertainty::{Dataset, Metric};
use gbtopt::Error;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GbtStatus {
    GBT_OK = 0,
    /// A required pointer argument was NULL.
    GBT_ERR_NULL = 1,
    /// An argument was out of range or inconsistent.
    GBT_ERR_INVALID = 2,
    /// A file could not be read or written.
    GBT_ERR_IO = 3,
    /// A model file was malformed or of an unsupported version.
    GBT_ERR_MODEL = 4,
    /// Array lengths did not match the problem dimension.
    GBT_ERR_DIMENSION = 5,
    /// A point lay outside the search domain.
    GBT_ERR_OUT_OF_BOUNDS = 6,
    /// The solver stopped on its time or node limit; results were still written.
    GBT_LIMIT_REACHED = 7,
    /// An internal error was caught at the boundary.
    GBT_ERR_INTERNAL = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GbtMode {
    GBT_MODE_EXPLORE = 0,
    GBT_MODE_PENALTY = 1,
    GBT_MODE_CLUSTER_PENALTY = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GbtMetric {
    GBT_METRIC_SQUARED_EUCLIDEAN = 0,
    GBT_METRIC_MANHATTAN = 1,
}

/// Opaque handle to a trained tree ensemble.
pub struct GbtModel {
    inner: TreeEnsemble,
}

/// Opaque handle to an acquisition problem.
pub struct GbtProblem {
    inner: AcquisitionProblem,
}

/// Data and settings that define an acquisition problem.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GbtProblemSpec {
    pub mode: GbtMode,
    pub metric: GbtMetric,
    pub kappa: f64,
    /// Exploration limit factor (explore mode).
    pub zeta: f64,
    /// k-means centers in cluster-penalty mode; 0 picks ceil(sqrt(n_rows)).
    pub n_clusters: usize,
    pub seed: u64,
    /// `n_rows * n_features` observations, row-major.
    pub data_x: *const f64,
    /// `n_rows` observed values.
    pub data_y: *const f64,
    pub n_rows: usize,
    pub n_features: usize,
    /// `n_features` lower bounds.
    pub lower: *const f64,
    /// `n_features` upper bounds.
    pub upper: *const f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbtSolverOptions {
    pub rel_gap: f64,
    pub time_limit: f64,
    pub lookahead: usize,
    pub group_size: usize,
    /// 0 means no node limit.
    pub max_nodes: u64,
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GbtSolveSummary {
    pub upper_bound: f64,
    pub lower_bound: f64,
    pub rel_gap: f64,
    pub nodes_explored: u64,
    pub wall_time: f64,
    /// 0 gap reached, 1 time limit, 2 node limit.
    pub termination: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> GbtStatus {
    match err {
        Error::InvalidInput(_) | Error::BlackBox(_) | Error::Csv(_) => GbtStatus::GBT_ERR_INVALID,
        Error::DimensionMismatch { .. } => GbtStatus::GBT_ERR_DIMENSION,
        Error::Model(_) | Error::UnsupportedVersion { .. } | Error::Json(_) => GbtStatus::GBT_ERR_MODEL,
        Error::OutOfBounds { .. } => GbtStatus::GBT_ERR_OUT_OF_BOUNDS,
        Error::Io { .. } => GbtStatus::GBT_ERR_IO,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard<F: FnOnce() -> Result<GbtStatus, (GbtStatus, String)>>(f: F) -> GbtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => status,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal error (panic caught at the C boundary)");
            GbtStatus::GBT_ERR_INTERNAL
        }
    }
}

fn lib_err(e: Error) -> (GbtStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(name: &str) -> (GbtStatus, String) {
    (GbtStatus::GBT_ERR_NULL, format!("{name} is NULL"))
}

unsafe fn array<'a>(p: *const f64, n: usize, name: &str) -> Result<&'a [f64], (GbtStatus, String)> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(slice::from_raw_parts(p, n))
}

unsafe fn c_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, (GbtStatus, String)> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (GbtStatus::GBT_ERR_INVALID, format!("{name} is not valid UTF-8")))
}

/// Message describing the last failure on this thread, or NULL if none.
#[no_mangle]
pub extern "C" fn gbt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gbt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a model from a JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gbt_model_load(path: *const c_char, out: *mut *mut GbtModel) -> GbtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = c_str(path, "path")?;
        let model = load_model(Path::new(path)).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(GbtModel { inner: model }));
        Ok(GbtStatus::GBT_OK)
    })
}

/// Parses a model from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gbt_model_from_json(json: *const c_char, out: *mut *mut GbtModel) -> GbtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = c_str(json, "json")?;
        let model = model_from_json(text).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(GbtModel { inner: model }));
        Ok(GbtStatus::GBT_OK)
    })
}

/// Number of input features of a model, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn gbt_model_num_features(model: *const GbtModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.num_features)
}

/// Number of trees of a model, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn gbt_model_num_trees(model: *const GbtModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.len())
}

/// Ensemble prediction at `x` (`n` values).
///
/// # Safety
/// `model` must be a handle from this library, `x` must point to `n`
/// doubles and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gbt_model_predict(model: *const GbtModel, x: *const f64, n: usize, out: *mut f64) -> GbtStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let x = array(x, n, "x")?;
        *out = model.inner.predict(x).map_err(lib_err)?;
        Ok(GbtStatus::GBT_OK)
    })
}

/// Releases a model. Problems built from it stay valid.
///
/// # Safety
/// `model` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gbt_model_free(model: *mut GbtModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Builds an acquisition problem from a model and observations. The model
/// is copied; it may be freed afterwards.
///
/// # Safety
/// `model` must be a handle from this library, `spec` must point to a
/// valid spec whose arrays have the stated lengths, and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gbt_problem_new(
    model: *const GbtModel,
    spec: *const GbtProblemSpec,
    out: *mut *mut GbtProblem,
) -> GbtStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let spec = spec.as_ref().ok_or_else(|| null("spec"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let n = spec.n_features;
        let rows = spec.n_rows;
        let cells = rows
            .checked_mul(n)
            .ok_or_else(|| (GbtStatus::GBT_ERR_INVALID, "n_rows * n_features overflows".to_string()))?;
        let xs = array(spec.data_x, cells, "data_x")?;
        let ys = array(spec.data_y, rows, "data_y")?;
        let lower = array(spec.lower, n, "lower")?;
        let upper = array(spec.upper, n, "upper")?;
        let data = Dataset::new(
            xs.chunks(n.max(1)).take(rows).map(<[f64]>::to_vec).collect(),
            ys.to_vec(),
        )
        .map_err(lib_err)?;
        let bounds: Vec<(f64, f64)> = lower.iter().copied().zip(upper.iter().copied()).collect();
        let config = BOConfig {
            mode: match spec.mode {
                GbtMode::GBT_MODE_EXPLORE => Mode::Explore,
                GbtMode::GBT_MODE_PENALTY => Mode::Penalty,
                GbtMode::GBT_MODE_CLUSTER_PENALTY => Mode::ClusterPenalty,
            },
            metric: match spec.metric {
                GbtMetric::GBT_METRIC_SQUARED_EUCLIDEAN => Metric::SquaredEuclidean,
                GbtMetric::GBT_METRIC_MANHATTAN => Metric::Manhattan,
            },
            kappa: spec.kappa,
            zeta: spec.zeta,
            cluster_count: (spec.n_clusters > 0).then_some(spec.n_clusters),
            seed: spec.seed,
            ..BOConfig::default()
        };
        let problem = assemble_problem(&data, &bounds, &config, model.inner.clone()).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(GbtProblem { inner: problem }));
        Ok(GbtStatus::GBT_OK)
    })
}

/// Problem dimension, or 0 for NULL.
///
/// # Safety
/// `problem` must be NULL or a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn gbt_problem_dim(problem: *const GbtProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.inner.dim())
}

/// Acquisition value at `x`.
///
/// # Safety
/// `problem` must be a handle from this library, `x` must point to `n`
/// doubles and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gbt_problem_evaluate(
    problem: *const GbtProblem,
    x: *const f64,
    n: usize,
    out: *mut f64,
) -> GbtStatus {
    guard(|| {
        let problem = problem.as_ref().ok_or_else(|| null("problem"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let x = array(x, n, "x")?;
        *out = problem.inner.evaluate(x).map_err(lib_err)?;
        Ok(GbtStatus::GBT_OK)
    })
}

/// Default solver options.
#[no_mangle]
pub extern "C" fn gbt_solver_options_default() -> GbtSolverOptions {
    let d = SolverConfig::default();
    GbtSolverOptions {
        rel_gap: d.rel_gap,
        time_limit: d.time_limit,
        lookahead: d.lookahead,
        group_size: d.group_size,
        max_nodes: 0,
        seed: d.seed,
    }
}

/// Minimizes the acquisition function. Writes the minimizer to `x_out`
/// (`n` doubles) and statistics to `summary`. Returns `GBT_LIMIT_REACHED`
/// when a limit stopped the search; outputs are written in that case too.
///
/// # Safety
/// `problem` must be a handle from this library; `options` may be NULL for
/// defaults; `x_out` must point to `n` writable doubles; `summary` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn gbt_problem_solve(
    problem: *const GbtProblem,
    options: *const GbtSolverOptions,
    x_out: *mut f64,
    n: usize,
    summary: *mut GbtSolveSummary,
) -> GbtStatus {
    guard(|| {
        let problem = problem.as_ref().ok_or_else(|| null("problem"))?;
        if x_out.is_null() {
            return Err(null("x_out"));
        }
        if n != problem.inner.dim() {
            return Err(lib_err(Error::DimensionMismatch {
                expected: problem.inner.dim(),
                got: n,
            }));
        }
        let opts = options.as_ref().copied().unwrap_or_else(|| gbt_solver_options_default());
        let config = SolverConfig {
            rel_gap: opts.rel_gap,
            time_limit: opts.time_limit,
            lookahead: opts.lookahead,
            group_size: opts.group_size,
            max_nodes: (opts.max_nodes > 0).then_some(opts.max_nodes),
            seed: opts.seed,
            ..SolverConfig::default()
        };
        let res = solve(&problem.inner, &config).map_err(lib_err)?;
        slice::from_raw_parts_mut(x_out, n).copy_from_slice(&res.x_next);
        if let Some(s) = summary.as_mut() {
            *s = GbtSolveSummary {
                upper_bound: res.upper_bound,
                lower_bound: res.lower_bound,
                rel_gap: res.rel_gap,
                nodes_explored: res.nodes_explored,
                wall_time: res.wall_time,
                termination: match res.termination {
                    Termination::Gap => 0,
                    Termination::Time => 1,
                    Termination::NodeLimit => 2,
                },
            };
        }
        Ok(match res.termination {
            Termination::Gap => GbtStatus::GBT_OK,
            _ => GbtStatus::GBT_LIMIT_REACHED,
        })
    })
}

/// Releases a problem.
///
/// # Safety
/// `problem` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gbt_problem_free(problem: *mut GbtProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}
