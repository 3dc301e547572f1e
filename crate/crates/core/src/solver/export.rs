//! Writes the explicit mixed-integer formulation of an acquisition problem in
//! CPLEX LP format, with a JSON manifest of variable and row counts.
//!
//! Variables:
//!
//! | name        | meaning                                                  |
//! |-------------|----------------------------------------------------------|
//! | `x_i`       | raw input, bounded by the domain                         |
//! | `y_i_j`     | binary, 1 iff `x_i ≤ v_{i,j}` (`j = 1..=m_i`)            |
//! | `z_t_l`     | leaf `l` (preorder leaf ordinal) of tree `t` is active   |
//! | `mu`        | ensemble prediction                                      |
//! | `alpha`     | uncertainty term                                         |
//! | `b_d`       | binary reference selector (penalty modes)                |
//! | `rp_d_i`, `rm_d_i` | positive/negative standardized deviation (Manhattan) |
//!
//! The upper linking row uses `x_i + Σ_j (v_{i,j+1} − v_{i,j}) y_{i,j} ≤ v_{i,m+1}`,
//! which is what makes `y_{i,j} = 1` imply `x_i ≤ v_{i,j}`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::problem::{AcquisitionProblem, Mode};
use crate::tree::{Node, Tree};
use crate::uncertainty::Metric;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportCounts {
    pub x: usize,
    pub y: usize,
    pub z: usize,
    pub b: usize,
    pub r: usize,
    pub tree_rows: usize,
    pub linking_rows: usize,
    pub distance_rows: usize,
    /// Rows `rp − rm + x/σ = r + μ/σ`, one per dimension and reference.
    pub deviation_rows: usize,
    pub sos1: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub mode: Mode,
    pub metric: Metric,
    pub counts: ExportCounts,
    pub kappa: f64,
    pub alpha_limit: Option<f64>,
    #[serde(rename = "M")]
    pub big_m: Option<f64>,
    pub base_offset: f64,
}

/// Path of the manifest written next to `lp_path`: `<stem>.manifest.json`.
pub fn manifest_path(lp_path: &Path) -> PathBuf {
    let stem = lp_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    lp_path.with_file_name(format!("{stem}.manifest.json"))
}

/// Writes `<destination>` (LP) and its manifest.
pub fn export_mip(problem: &AcquisitionProblem, destination: &Path) -> Result<ExportManifest> {
    let (lp, manifest) = to_lp(problem);
    fs::write(destination, lp).map_err(|e| Error::io(destination, e))?;
    let mpath = manifest_path(destination);
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    fs::write(&mpath, json).map_err(|e| Error::io(&mpath, e))?;
    Ok(manifest)
}

fn num(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

/// Linear expression builder; terms with a zero coefficient are dropped.
#[derive(Default)]
struct Expr {
    terms: Vec<(f64, String)>,
}

impl Expr {
    fn add(&mut self, coef: f64, var: impl Into<String>) -> &mut Self {
        if coef != 0.0 {
            self.terms.push((coef, var.into()));
        }
        self
    }

    fn render(&self) -> String {
        if self.terms.is_empty() {
            return "0 mu".into();
        }
        let mut out = String::new();
        for (k, (c, v)) in self.terms.iter().enumerate() {
            if k > 0 && k % 8 == 0 {
                out.push_str("\n   ");
            }
            let sign = if *c < 0.0 { "-" } else { "+" };
            if k == 0 && *c >= 0.0 {
                out.push_str(&term(c.abs(), v));
            } else {
                let _ = write!(out, " {sign} {}", term(c.abs(), v));
            }
        }
        out
    }
}

fn term(c: f64, v: &str) -> String {
    if c == 1.0 {
        v.to_string()
    } else {
        format!("{} {v}", num(c))
    }
}

fn leaves_under(tree: &Tree, idx: usize, ordinal: &[usize], out: &mut Vec<usize>) {
    match tree.nodes[idx] {
        Node::Leaf { .. } => out.push(ordinal[idx]),
        Node::Split { left, right, .. } => {
            leaves_under(tree, left, ordinal, out);
            leaves_under(tree, right, ordinal, out);
        }
    }
}

/// Renders the LP text and its manifest.
pub fn to_lp(problem: &AcquisitionProblem) -> (String, ExportManifest) {
    let grid = problem.model.grid();
    let ens = problem.model.ensemble();
    let n = grid.num_dims();
    let mut counts = ExportCounts {
        x: n,
        ..ExportCounts::default()
    };
    let mut rows: Vec<String> = Vec::new();
    fn line(name: String, expr: &Expr, sense: &str, rhs: f64) -> String {
        format!(" {name}: {} {sense} {}", expr.render(), num(rhs))
    }
    let mut binaries = Vec::new();

    // Tree encoding.
    let mut mu = Expr::default();
    mu.add(1.0, "mu");
    for (t, tree) in ens.trees.iter().enumerate() {
        let mut ordinal = vec![usize::MAX; tree.nodes.len()];
        let mut one = Expr::default();
        for (l, &idx) in tree.leaves().iter().enumerate() {
            ordinal[idx] = l;
            mu.add(-tree.leaf_value(idx), format!("z_{t}_{l}"));
            one.add(1.0, format!("z_{t}_{l}"));
            counts.z += 1;
        }
        rows.push(line(format!("leaf_{t}"), &one, "=", 1.0));
        counts.tree_rows += 1;
        for (s, node) in tree.nodes.iter().enumerate() {
            let Node::Split {
                feature,
                threshold,
                left,
                right,
            } = *node
            else {
                continue;
            };
            let pos = grid.dims[feature].split_position(threshold);
            let m = grid.dims[feature].m();
            for (side, child) in [("l", left), ("r", right)] {
                let mut leaves = Vec::new();
                leaves_under(tree, child, &ordinal, &mut leaves);
                let mut e = Expr::default();
                for l in leaves {
                    e.add(1.0, format!("z_{t}_{l}"));
                }
                let y = format!("y_{feature}_{pos}");
                let rhs = match (side, pos) {
                    // Branch unreachable inside the domain.
                    ("l", 0) => 0.0,
                    ("r", p) if p == m + 1 => 0.0,
                    ("l", p) if p == m + 1 => 1.0,
                    ("r", 0) => 1.0,
                    ("l", _) => {
                        e.add(-1.0, y);
                        0.0
                    }
                    _ => {
                        e.add(1.0, y);
                        1.0
                    }
                };
                rows.push(line(format!("split_{t}_{s}_{side}"), &e, "<=", rhs));
                counts.tree_rows += 1;
            }
        }
    }
    rows.push(line("pred".into(), &mu, "=", ens.base_offset));
    counts.tree_rows += 1;

    // Interval ordering and linking.
    for (i, d) in grid.dims.iter().enumerate() {
        let m = d.m();
        counts.y += m;
        for j in 1..=m {
            binaries.push(format!("y_{i}_{j}"));
        }
        for j in 1..m {
            let mut e = Expr::default();
            e.add(1.0, format!("y_{i}_{j}")).add(-1.0, format!("y_{i}_{}", j + 1));
            rows.push(line(format!("order_{i}_{j}"), &e, "<=", 0.0));
            counts.linking_rows += 1;
        }
        if m == 0 {
            continue;
        }
        let mut lower = Expr::default();
        let mut upper = Expr::default();
        lower.add(1.0, format!("x_{i}"));
        upper.add(1.0, format!("x_{i}"));
        for j in 1..=m {
            lower.add(d.line(j) - d.line(j - 1), format!("y_{i}_{j}"));
            upper.add(d.line(j + 1) - d.line(j), format!("y_{i}_{j}"));
        }
        rows.push(line(format!("link_lo_{i}"), &lower, ">=", d.line(m)));
        rows.push(line(format!("link_up_{i}"), &upper, "<=", d.line(m + 1)));
        counts.linking_rows += 2;
    }

    // Distance encoding. For reference r and standardized s_i = (x_i − μ_i)/σ_i,
    // s_i − r_i = x_i/σ_i − c_i with c_i = μ_i/σ_i + r_i.
    let penalty = problem.mode.is_penalty();
    let big_m = problem.big_m;
    let mut sos = Vec::new();
    let mut select = Expr::default();
    for (d, r) in problem.refs.points.iter().enumerate() {
        let c: Vec<f64> = (0..n)
            .map(|i| problem.std.mean[i] / problem.std.std[i] + r[i])
            .collect();
        let mut e = Expr::default();
        let mut rhs = 0.0;
        match problem.metric {
            Metric::SquaredEuclidean => {
                // Σ (x_i/σ_i)² − 2 c_i x_i/σ_i + c_i²
                let quad: Vec<String> = (0..n)
                    .map(|i| {
                        let s = problem.std.std[i];
                        format!("{} x_{i} ^ 2", num(1.0 / (s * s)))
                    })
                    .collect();
                let sign = if penalty { 1.0 } else { -1.0 };
                for i in 0..n {
                    e.add(-sign * 2.0 * c[i] / problem.std.std[i], format!("x_{i}"));
                }
                let csq: f64 = c.iter().map(|v| v * v).sum();
                let (name, rhs) = if penalty {
                    e.add(-1.0, "alpha").add(big_m, format!("b_{d}"));
                    (format!("dist_{d}"), big_m - csq)
                } else {
                    e.add(1.0, "alpha");
                    (format!("dist_{d}"), csq)
                };
                let q = if penalty {
                    format!(" + [ {} ]", quad.join(" + "))
                } else {
                    format!(" - [ {} ]", quad.join(" + "))
                };
                rows.push(format!(" {name}: {}{q} <= {}", e.render(), num(rhs)));
                counts.distance_rows += 1;
            }
            Metric::Manhattan => {
                for i in 0..n {
                    let mut dev = Expr::default();
                    dev.add(1.0, format!("rp_{d}_{i}"))
                        .add(-1.0, format!("rm_{d}_{i}"))
                        .add(1.0 / problem.std.std[i], format!("x_{i}"));
                    rows.push(line(format!("dev_{d}_{i}"), &dev, "=", c[i]));
                    counts.deviation_rows += 1;
                    counts.r += 2;
                    sos.push(format!(" sos_{d}_{i}: S1:: rp_{d}_{i}:1 rm_{d}_{i}:2"));
                    counts.sos1 += 1;
                }
                let sign = if penalty { 1.0 } else { -1.0 };
                for i in 0..n {
                    e.add(sign, format!("rp_{d}_{i}")).add(sign, format!("rm_{d}_{i}"));
                }
                if penalty {
                    e.add(-1.0, "alpha").add(big_m, format!("b_{d}"));
                    rhs = big_m;
                } else {
                    e.add(1.0, "alpha");
                }
                rows.push(line(format!("dist_{d}"), &e, "<=", rhs));
                counts.distance_rows += 1;
            }
        }
        if penalty {
            select.add(1.0, format!("b_{d}"));
            binaries.push(format!("b_{d}"));
            counts.b += 1;
        }
    }
    if penalty {
        rows.push(line("select".into(), &select, "=", 1.0));
    }

    let mut objective = Expr::default();
    objective.add(1.0, "mu");
    match problem.mode {
        Mode::Explore => objective.add(-problem.kappa, "alpha"),
        _ => objective.add(problem.kappa, "alpha"),
    };

    let mut out = String::new();
    let _ = writeln!(out, "\\ acquisition problem: mode {}, metric {}", problem.mode, problem.metric);
    let _ = writeln!(out, "Minimize\n obj: {}", objective.render());
    out.push_str("Subject To\n");
    for r in &rows {
        out.push_str(r);
        out.push('\n');
    }
    out.push_str("Bounds\n");
    for (i, d) in grid.dims.iter().enumerate() {
        let _ = writeln!(out, " {} <= x_{i} <= {}", num(d.lower), num(d.upper));
    }
    out.push_str(" mu free\n");
    match problem.mode {
        Mode::Explore => {
            let _ = writeln!(out, " 0 <= alpha <= {}", num(problem.alpha_limit));
        }
        _ => out.push_str(" alpha >= 0\n"),
    }
    if !binaries.is_empty() {
        out.push_str("Binaries\n");
        for chunk in binaries.chunks(8) {
            let _ = writeln!(out, " {}", chunk.join(" "));
        }
    }
    if !sos.is_empty() {
        out.push_str("SOS\n");
        for s in &sos {
            out.push_str(s);
            out.push('\n');
        }
    }
    out.push_str("End\n");

    let manifest = ExportManifest {
        mode: problem.mode,
        metric: problem.metric,
        counts,
        kappa: problem.kappa,
        alpha_limit: (problem.mode == Mode::Explore).then_some(problem.alpha_limit),
        big_m: penalty.then_some(big_m),
        base_offset: ens.base_offset,
    };
    (out, manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::testing::random_ensemble;
    use crate::tree::GriddedEnsemble;
    use crate::uncertainty::{RefKind, ReferenceSet, Standardizer};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn problem(mode: Mode, metric: Metric) -> AcquisitionProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ens = random_ensemble(&mut rng, 3, 5, 3);
        let model = GriddedEnsemble::new(ens, &[(0.0, 1.0); 3]).unwrap();
        let refs = ReferenceSet::new(
            vec![vec![0.1, -0.2, 0.3], vec![1.0, 0.0, -1.0], vec![0.0, 0.5, 0.5], vec![-0.3, 0.2, 0.9]],
            RefKind::Data,
        )
        .unwrap();
        let std = Standardizer::new(vec![0.5; 3], vec![0.25, 0.5, 2.0]).unwrap();
        let alpha = (mode == Mode::Explore).then_some(2.0);
        AcquisitionProblem::new(mode, model, refs, std, metric, 1.5, alpha).unwrap()
    }

    #[test]
    fn counts_follow_formulation() {
        for metric in [Metric::Manhattan, Metric::SquaredEuclidean] {
            let p = problem(Mode::Penalty, metric);
            let (lp, man) = to_lp(&p);
            let c = man.counts;
            let m_sum: usize = p.model.grid().dims.iter().map(|d| d.m()).sum();
            let leaves: usize = p.model.ensemble().trees.iter().map(Tree::num_leaves).sum();
            assert_eq!(c.y, m_sum);
            assert_eq!(c.z, leaves);
            assert_eq!(c.b, 4);
            let dev_rows = lp.lines().filter(|l| l.starts_with(" dev_")).count();
            match metric {
                Metric::Manhattan => {
                    assert_eq!(dev_rows, 3 * 4);
                    assert_eq!(c.sos1, 3 * 4);
                }
                Metric::SquaredEuclidean => {
                    assert_eq!(dev_rows, 0);
                    assert_eq!(lp.matches("^ 2").count(), 3 * 4);
                }
            }
            assert_eq!(lp.lines().filter(|l| l.starts_with(" dist_")).count(), 4);
            assert!(lp.ends_with("End\n"));
            assert_eq!(man.big_m, Some(p.big_m));
        }
    }

    #[test]
    fn explore_has_no_selectors() {
        let (lp, man) = to_lp(&problem(Mode::Explore, Metric::Manhattan));
        assert_eq!(man.counts.b, 0);
        assert!(lp.contains(" 0 <= alpha <= 2\n"));
        assert!(lp.contains(" obj: mu - 1.5 alpha\n"));
        assert!(!lp.contains("select"));
        assert_eq!(man.big_m, None);
    }

    #[test]
    fn writes_manifest_next_to_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("acq.lp");
        let p = problem(Mode::Penalty, Metric::Manhattan);
        let man = export_mip(&p, &path).unwrap();
        let text = fs::read_to_string(dir.path().join("acq.manifest.json")).unwrap();
        let back: ExportManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back, man);
        assert!(export_mip(&p, &dir.path().join("missing").join("x.lp")).is_err());
    }

    #[test]
    fn number_formatting() {
        assert_eq!(num(0.5), "0.5");
        assert_eq!(num(-3.0), "-3");
        assert_eq!(num(1e-7), "1e-7");
        assert_eq!(num(0.0), "0");
    }
}
