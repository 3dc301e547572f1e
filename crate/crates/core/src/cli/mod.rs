//! Command implementations behind the `gbtopt` binary.
//!
//! Exit codes: 0 success, 2 usage error, 3 input error, 4 solver limit hit
//! (the result is still written).

pub mod config;
pub mod session;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::benchmarks::{make_benchmark, Benchmark, BENCHMARK_NAMES};
use crate::bo::{
    assemble_problem, build_problem, run_campaign, uncertainty_study, BOConfig, BlackBox, StudyConfig,
};
use crate::error::{Error, Result};
use crate::solver::export::export_mip;
use crate::solver::{solve, AcquisitionProblem, Termination};
use crate::tree::{load_model, save_model, train, TreeEnsemble};
use crate::uncertainty::{kmeans, Dataset, Standardizer};
use config::{parse_bounds, parse_list, parse_seeds, Settings};
use session::{Session, SessionSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_LIMIT: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "gbtopt", version, about = "Bayesian optimization with gradient-boosted tree surrogates")]
pub struct Cli {
    /// TOML file with default settings; command-line flags take precedence
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Run a full optimization campaign on a benchmark or an external script
    Run {
        /// Registered benchmark (see list-benchmarks)
        #[arg(long, conflicts_with = "script")]
        benchmark: Option<String>,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        /// Shell command evaluating a point: called with the coordinates as
        /// arguments, prints the objective value
        #[arg(long, requires = "bounds")]
        script: Option<String>,
        /// Search box as lo:hi,lo:hi,... (defaults to the benchmark's)
        #[arg(long, allow_hyphen_values = true)]
        bounds: Option<String>,
        /// Trace CSV; a manifest <stem>.manifest.json is written next to it
        #[arg(long, default_value = "trace.csv")]
        out: PathBuf,
        /// Write measured wall-clock seconds instead of 0
        #[arg(long)]
        timings: bool,
        #[command(flatten)]
        settings: Settings,
    },
    /// Solve one acquisition problem and print the result as JSON
    Solve {
        #[command(flatten)]
        input: ProblemInput,
        /// Also write the JSON result to this file
        #[arg(long)]
        out: Option<PathBuf>,
        /// Include the wall time in the output
        #[arg(long)]
        timings: bool,
        #[command(flatten)]
        settings: Settings,
    },
    /// Write the explicit mixed-integer formulation in LP format
    Export {
        #[command(flatten)]
        input: ProblemInput,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Surrogate error at penalty-mode proposals across a kappa grid
    Study {
        #[arg(long, default_value = "rosenbrock")]
        benchmark: String,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        /// Comma-separated kappa values
        #[arg(long, default_value = "0.5,2,8")]
        kappas: String,
        #[arg(long, default_value_t = 200)]
        n_train: usize,
        /// Seeds as a list with ranges, e.g. 101-110
        #[arg(long, default_value = "101-110")]
        seeds: String,
        /// Per-kappa summary CSV
        #[arg(long, default_value = "study.csv")]
        out: PathBuf,
        /// Optional per-seed CSV
        #[arg(long)]
        rows: Option<PathBuf>,
        #[command(flatten)]
        settings: Settings,
    },
    /// Propose the next point of an ask/tell session (created on first use)
    Ask {
        #[arg(long)]
        session: PathBuf,
        /// Search box, required when creating the session
        #[arg(long, allow_hyphen_values = true)]
        bounds: Option<String>,
        #[command(flatten)]
        settings: Settings,
    },
    /// Record an observation in an ask/tell session
    Tell {
        #[arg(long)]
        session: PathBuf,
        /// Evaluated point as comma-separated values; defaults to the pending proposal
        #[arg(long, allow_hyphen_values = true)]
        x: Option<String>,
        /// Observed objective value
        #[arg(long, allow_hyphen_values = true)]
        f: f64,
    },
    /// Train a tree ensemble on a dataset and save it as JSON
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// k-means centers of the standardized dataset, written in raw coordinates
    Cluster {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        max_iters: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// List the registered benchmark functions
    ListBenchmarks,
}

#[derive(Debug, clap::Args)]
pub struct ProblemInput {
    /// Dataset CSV: feature columns followed by the target column
    #[arg(long)]
    pub data: PathBuf,
    /// Trained model JSON; trained from the data when omitted
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Search box as lo:hi,lo:hi,...
    #[arg(long, allow_hyphen_values = true)]
    pub bounds: String,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}

fn settings(cli_config: &Option<PathBuf>, flags: &Settings) -> Result<Settings> {
    let file = match cli_config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    Ok(file.overlay(flags))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn print_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    let mut out = std::io::stdout().lock();
    out.write_all(s.as_bytes()).map_err(|e| Error::io("<stdout>", e))?;
    Ok(s)
}

fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Cmd::Run {
            benchmark,
            dim,
            script,
            bounds,
            out,
            timings,
            settings: flags,
        } => {
            let config = settings(&cli.config, &flags)?.apply(&BOConfig::default())?;
            config.validate()?;
            let (label, trace) = match (benchmark, script) {
                (Some(name), None) => {
                    let mut b = make_benchmark(&name, dim)?;
                    let bounds = match bounds {
                        Some(s) => parse_bounds(&s)?,
                        None => b.bounds.clone(),
                    };
                    if bounds.len() != dim {
                        return Err(Error::DimensionMismatch {
                            expected: dim,
                            got: bounds.len(),
                        });
                    }
                    (json!({"benchmark": name, "dim": dim, "bounds": bounds}), run_campaign(&mut b, &bounds, &config)?)
                }
                (None, Some(cmd)) => {
                    let bounds = parse_bounds(bounds.as_deref().unwrap_or_default())?;
                    let mut bb = ScriptBlackBox { command: cmd.clone() };
                    (json!({"script": cmd, "dim": bounds.len(), "bounds": bounds}), run_campaign(&mut bb, &bounds, &config)?)
                }
                _ => return Err(Error::invalid("give exactly one of --benchmark or --script")),
            };
            trace.save_csv(&out, timings)?;
            let manifest = json!({
                "version": env!("CARGO_PKG_VERSION"),
                "problem": label,
                "config": config,
                "seed": config.seed,
                "evaluations": trace.len(),
                "best": trace.best(),
                "aborted": trace.aborted,
            });
            let mpath = crate::solver::export::manifest_path(&out);
            write_file(&mpath, format!("{}\n", serde_json::to_string_pretty(&manifest)?).as_bytes())?;
            if let Some(msg) = &trace.aborted {
                eprintln!("error: campaign aborted: {msg}");
                return Ok(EXIT_INPUT);
            }
            let limited = trace
                .rows
                .iter()
                .any(|r| r.solve.is_some_and(|s| s.termination != Termination::Gap));
            Ok(if limited { EXIT_LIMIT } else { EXIT_OK })
        }
        Cmd::Solve {
            input,
            out,
            timings,
            settings: flags,
        } => {
            let config = settings(&cli.config, &flags)?.apply(&BOConfig::default())?;
            let problem = load_problem(&input, &config)?;
            let res = solve(&problem, &config.solver)?;
            let mut value = json!({
                "mode": problem.mode,
                "x_next": res.x_next,
                "upper_bound": res.upper_bound,
                "lower_bound": res.lower_bound,
                "rel_gap": res.rel_gap,
                "nodes_explored": res.nodes_explored,
                "termination": res.termination,
            });
            if timings {
                value["wall_time"] = json!(res.wall_time);
            }
            let text = print_json(&value)?;
            if let Some(path) = out {
                write_file(&path, text.as_bytes())?;
            }
            Ok(if res.termination == Termination::Gap { EXIT_OK } else { EXIT_LIMIT })
        }
        Cmd::Export {
            input,
            out,
            settings: flags,
        } => {
            let config = settings(&cli.config, &flags)?.apply(&BOConfig::default())?;
            let problem = load_problem(&input, &config)?;
            let manifest = export_mip(&problem, &out)?;
            print_json(&manifest)?;
            Ok(EXIT_OK)
        }
        Cmd::Study {
            benchmark,
            dim,
            kappas,
            n_train,
            seeds,
            out,
            rows,
            settings: flags,
        } => {
            let config = settings(&cli.config, &flags)?.apply(&BOConfig::default())?;
            let mut b = make_benchmark(&benchmark, dim)?;
            let bounds = b.bounds.clone();
            let study = StudyConfig {
                kappas: parse_list(&kappas)?,
                n_train,
                seeds: parse_seeds(&seeds)?,
                metric: config.metric,
                gbrt: config.gbrt.clone(),
                solver: config.solver.clone(),
            };
            let report = uncertainty_study(&mut b, &bounds, &study)?;
            let mut buf = Vec::new();
            report.write_summary_csv(&mut buf)?;
            write_file(&out, &buf)?;
            std::io::stdout()
                .write_all(&buf)
                .map_err(|e| Error::io("<stdout>", e))?;
            if let Some(path) = rows {
                let mut buf = Vec::new();
                report.write_rows_csv(&mut buf)?;
                write_file(&path, &buf)?;
            }
            Ok(EXIT_OK)
        }
        Cmd::Ask {
            session,
            bounds,
            settings: flags,
        } => {
            let s = if Session::exists(&session) {
                Session::open(&session)?
            } else {
                let bounds = bounds
                    .ok_or_else(|| Error::invalid("--bounds is required to create a new session"))
                    .and_then(|b| parse_bounds(&b))?;
                Session::create(
                    &session,
                    SessionSpec {
                        bounds,
                        settings: settings(&cli.config, &flags)?,
                    },
                )?
            };
            let merged = s.spec.settings.overlay(&flags);
            let config = merged.apply(&BOConfig::default())?;
            let ask = s.ask(&config)?;
            print_json(&ask)?;
            let limited = ask.solve.is_some_and(|r| r.termination != Termination::Gap);
            Ok(if limited { EXIT_LIMIT } else { EXIT_OK })
        }
        Cmd::Tell { session, x, f } => {
            let s = Session::open(&session)?;
            let x = match x {
                Some(text) => parse_list(&text)?,
                None => {
                    s.pending()?
                        .ok_or_else(|| Error::invalid("no pending proposal; pass --x"))?
                        .x
                }
            };
            let n = s.tell(&x, f)?;
            print_json(&json!({"observations": n}))?;
            Ok(EXIT_OK)
        }
        Cmd::Train {
            data,
            out,
            settings: flags,
        } => {
            let config = settings(&cli.config, &flags)?.apply(&BOConfig::default())?;
            let ds = load_dataset(&data)?;
            let model = train(&ds, &config.gbrt)?;
            save_model(&model, &out)?;
            print_json(&json!({
                "trees": model.len(),
                "num_features": model.num_features,
                "base_offset": model.base_offset,
            }))?;
            Ok(EXIT_OK)
        }
        Cmd::Cluster {
            data,
            k,
            seed,
            max_iters,
            out,
        } => {
            let ds = load_dataset(&data)?;
            let std = Standardizer::fit(&ds)?;
            let points: Vec<Vec<f64>> = ds.x.iter().map(|x| std.standardize(x)).collect();
            let res = kmeans(&points, k, seed, max_iters)?;
            let centers = Dataset {
                x: res.centers.points.iter().map(|c| std.destandardize(c)).collect(),
                y: res
                    .assignment
                    .iter()
                    .fold(vec![0.0; k], |mut counts, &a| {
                        counts[a] += 1.0;
                        counts
                    }),
            };
            // The last column holds the cluster sizes.
            centers.save_csv(&out, ds.num_features())?;
            print_json(&json!({"k": k, "iterations": res.iterations, "inertia": res.inertia_history.last()}))?;
            Ok(EXIT_OK)
        }
        Cmd::ListBenchmarks => {
            let mut out = std::io::stdout().lock();
            for name in BENCHMARK_NAMES {
                let b: Benchmark = make_benchmark(name, 2)?;
                let (lo, hi) = b.bounds[0];
                let min_dim = if name == "rosenbrock" { 2 } else { 1 };
                writeln!(out, "{name}\tbounds [{lo}, {hi}]^dim\tdim >= {min_dim}").map_err(|e| Error::io("<stdout>", e))?;
            }
            Ok(EXIT_OK)
        }
    }
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    let ds = Dataset::load_csv(path)?;
    if ds.is_empty() {
        return Err(Error::invalid(format!("{}: dataset has no rows", path.display())));
    }
    Ok(ds)
}

fn load_problem(input: &ProblemInput, config: &BOConfig) -> Result<AcquisitionProblem> {
    let ds = load_dataset(&input.data)?;
    let bounds = parse_bounds(&input.bounds)?;
    match &input.model {
        Some(path) => {
            let model: TreeEnsemble = load_model(path)?;
            assemble_problem(&ds, &bounds, config, model)
        }
        None => build_problem(&ds, &bounds, config),
    }
}

/// Evaluates points by running a shell command with the coordinates appended
/// as arguments and parsing the last line of its standard output.
pub struct ScriptBlackBox {
    pub command: String,
}

impl BlackBox for ScriptBlackBox {
    fn evaluate(&mut self, x: &[f64]) -> Result<f64> {
        let args: Vec<String> = x.iter().map(f64::to_string).collect();
        let line = format!("{} {}", self.command, args.join(" "));
        let output = Command::new("sh")
            .arg("-c")
            .arg(&line)
            .output()
            .map_err(|e| Error::BlackBox(format!("cannot run {:?}: {e}", self.command)))?;
        if !output.status.success() {
            return Err(Error::BlackBox(format!("{line:?} exited with {}", output.status)));
        }
        let stdout = String::from_utf8_lossy(&output.stdout);
        let last = stdout.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("");
        let v: f64 = last
            .trim()
            .parse()
            .map_err(|_| Error::BlackBox(format!("{line:?} printed {last:?}, expected a number")))?;
        if !v.is_finite() {
            return Err(Error::BlackBox(format!("{line:?} returned {v}")));
        }
        Ok(v)
    }
}
