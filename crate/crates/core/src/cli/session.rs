//! File-based ask/tell sessions.
//!
//! A session is a directory holding
//!
//! - `session.json`: bounds and the settings fixed at creation;
//! - `data.csv`: observations `x0,...,x{n-1},y`, appended one line per `tell`
//!   and synced to disk before `tell` returns;
//! - `pending.json`: the last proposal, replaced atomically by `ask`.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bo::{next_query, sample_uniform, BOConfig, Phase, SolveSummary};
use crate::cli::config::Settings;
use crate::error::{Error, Result};
use crate::uncertainty::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSpec {
    pub bounds: Vec<(f64, f64)>,
    pub settings: Settings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ask {
    pub x: Vec<f64>,
    pub phase: Phase,
    /// Number of observations the proposal is based on.
    pub observations: usize,
    pub solve: Option<SolveSummary>,
}

pub struct Session {
    dir: PathBuf,
    pub spec: SessionSpec,
}

impl Session {
    fn spec_path(dir: &Path) -> PathBuf {
        dir.join("session.json")
    }

    fn data_path(&self) -> PathBuf {
        self.dir.join("data.csv")
    }

    fn pending_path(&self) -> PathBuf {
        self.dir.join("pending.json")
    }

    pub fn exists(dir: &Path) -> bool {
        Self::spec_path(dir).is_file()
    }

    pub fn create(dir: &Path, spec: SessionSpec) -> Result<Self> {
        crate::bo::check_bounds(&spec.bounds)?;
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let session = Session {
            dir: dir.to_path_buf(),
            spec,
        };
        write_atomic(&Self::spec_path(dir), &serde_json::to_string_pretty(&session.spec)?)?;
        let n = session.spec.bounds.len();
        let mut header: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
        header.push("y".into());
        write_atomic(&session.data_path(), &format!("{}\n", header.join(",")))?;
        Ok(session)
    }

    pub fn open(dir: &Path) -> Result<Self> {
        let path = Self::spec_path(dir);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let spec: SessionSpec = serde_json::from_str(&text)?;
        Ok(Session {
            dir: dir.to_path_buf(),
            spec,
        })
    }

    pub fn dataset(&self) -> Result<Dataset> {
        let ds = Dataset::load_csv(self.data_path())?;
        if !ds.is_empty() && ds.num_features() != self.spec.bounds.len() {
            return Err(Error::invalid("session data does not match the session bounds"));
        }
        Ok(ds)
    }

    /// Proposes the next point: the next initial-design point while fewer
    /// than `init_points` observations exist, otherwise the acquisition
    /// minimizer.
    pub fn ask(&self, config: &BOConfig) -> Result<Ask> {
        let data = self.dataset()?;
        let bounds = &self.spec.bounds;
        let ask = if data.len() < config.init_points {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let mut x = sample_uniform(&mut rng, bounds);
            for _ in 0..data.len() {
                x = sample_uniform(&mut rng, bounds);
            }
            Ask {
                x,
                phase: Phase::Init,
                observations: data.len(),
                solve: None,
            }
        } else {
            let mut cfg = config.clone();
            cfg.solver.seed = config.seed.wrapping_add(data.len() as u64);
            let p = next_query(&data, bounds, &cfg)?;
            Ask {
                x: p.x_next,
                phase: Phase::Optimize,
                observations: data.len(),
                solve: Some(SolveSummary::from(&p.result)),
            }
        };
        write_atomic(&self.pending_path(), &serde_json::to_string_pretty(&ask)?)?;
        Ok(ask)
    }

    pub fn pending(&self) -> Result<Option<Ask>> {
        let path = self.pending_path();
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Some(serde_json::from_str(&text)?))
    }

    /// Records an observation. Nothing is written unless the row is valid.
    pub fn tell(&self, x: &[f64], f: f64) -> Result<usize> {
        let bounds = &self.spec.bounds;
        if x.len() != bounds.len() {
            return Err(Error::DimensionMismatch {
                expected: bounds.len(),
                got: x.len(),
            });
        }
        for (dim, (&value, &(lower, upper))) in x.iter().zip(bounds).enumerate() {
            if !(value >= lower && value <= upper) {
                return Err(Error::OutOfBounds {
                    dim,
                    value,
                    lower,
                    upper,
                });
            }
        }
        if !f.is_finite() {
            return Err(Error::invalid(format!("observed value {f} is not finite")));
        }
        let data = self.dataset()?;
        let path = self.data_path();
        let mut file = OpenOptions::new()
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let mut line: Vec<String> = x.iter().map(f64::to_string).collect();
        line.push(f.to_string());
        writeln!(file, "{}", line.join(",")).map_err(|e| Error::io(&path, e))?;
        file.sync_all().map_err(|e| Error::io(&path, e))?;
        let pending = self.pending_path();
        if pending.exists() {
            fs::remove_file(&pending).map_err(|e| Error::io(&pending, e))?;
        }
        Ok(data.len() + 1)
    }
}

/// Writes via a temporary file and a rename so readers never see a partial file.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::GbrtParams;

    fn config() -> BOConfig {
        BOConfig {
            init_points: 3,
            budget: 10,
            gbrt: GbrtParams {
                num_trees: 10,
                min_samples_leaf: 1,
                ..GbrtParams::default()
            },
            seed: 5,
            ..BOConfig::default()
        }
    }

    #[test]
    fn ask_tell_cycle() {
        let dir = tempfile::tempdir().unwrap();
        let s = Session::create(
            dir.path(),
            SessionSpec {
                bounds: vec![(0.0, 1.0), (-1.0, 1.0)],
                settings: Settings::default(),
            },
        )
        .unwrap();
        let cfg = config();
        let first = s.ask(&cfg).unwrap();
        assert_eq!(first.phase, Phase::Init);
        assert_eq!(s.ask(&cfg).unwrap(), first);
        for _ in 0..3 {
            let a = s.ask(&cfg).unwrap();
            s.tell(&a.x, a.x[0] + a.x[1]).unwrap();
        }
        let a = s.ask(&cfg).unwrap();
        assert_eq!(a.phase, Phase::Optimize);
        assert_eq!(s.pending().unwrap(), Some(a.clone()));
        s.tell(&a.x, 0.0).unwrap();
        let b = s.ask(&cfg).unwrap();
        assert_eq!(b.observations, 4);

        let before = fs::read(s.data_path()).unwrap();
        assert!(s.tell(&[0.5], 1.0).is_err());
        assert!(s.tell(&[0.5, 2.0], 1.0).is_err());
        assert!(s.tell(&[0.5, 0.0], f64::NAN).is_err());
        assert_eq!(fs::read(s.data_path()).unwrap(), before);

        let reopened = Session::open(dir.path()).unwrap();
        assert_eq!(reopened.dataset().unwrap().len(), 4);
    }
}
