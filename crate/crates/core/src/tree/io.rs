//! Versioned JSON model files.
//!
//! ```json
//! {"version":1,"num_features":1,"base_offset":0.5,
//!  "trees":[{"nodes":[{"feature":0,"threshold":0.5,"left":1,"right":2},
//!                     {"value":-1.0},{"value":1.0}]}]}
//! ```
//!
//! Nodes are stored in preorder and children are referenced by index.
//! Floating-point values are written in shortest round-trip form, so a
//! save/load cycle is lossless.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::ensemble::{Tree, TreeEnsemble};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    num_features: usize,
    base_offset: f64,
    trees: Vec<Tree>,
}

#[derive(Deserialize)]
struct VersionProbe {
    version: Option<u32>,
}

pub fn model_to_json(ensemble: &TreeEnsemble) -> Result<String> {
    let file = ModelFile {
        version: MODEL_FORMAT_VERSION,
        num_features: ensemble.num_features,
        base_offset: ensemble.base_offset,
        trees: ensemble.trees.clone(),
    };
    Ok(serde_json::to_string(&file)?)
}

pub fn model_from_json(text: &str) -> Result<TreeEnsemble> {
    // Check the version before the full schema so that a file written by a
    // newer format reports a version error instead of a schema error.
    if let Ok(probe) = serde_json::from_str::<VersionProbe>(text) {
        match probe.version {
            Some(MODEL_FORMAT_VERSION) => {}
            Some(found) => {
                return Err(Error::UnsupportedVersion {
                    found,
                    supported: MODEL_FORMAT_VERSION,
                })
            }
            None => return Err(Error::Model("missing \"version\" field".into())),
        }
    }
    let file: ModelFile = serde_json::from_str(text).map_err(|e| describe_parse_error(text, &e))?;
    let ens = TreeEnsemble {
        trees: file.trees,
        base_offset: file.base_offset,
        num_features: file.num_features,
    };
    ens.validate()?;
    Ok(ens)
}

/// Names the tree record that was being parsed when the error occurred.
fn describe_parse_error(text: &str, err: &serde_json::Error) -> Error {
    let offset = line_col_to_offset(text, err.line(), err.column()).min(text.len());
    let prefix = &text[..offset];
    let record = match prefix.find("\"trees\"") {
        Some(start) => {
            let trees_seen = prefix[start..].matches("\"nodes\"").count();
            match trees_seen {
                0 => "tree list".to_string(),
                k => format!("trees[{}]", k - 1),
            }
        }
        None => "model header".to_string(),
    };
    Error::Model(format!("parse error in {record}: {err}"))
}

fn line_col_to_offset(text: &str, line: usize, column: usize) -> usize {
    let mut offset = 0;
    for (i, l) in text.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            return offset + column.saturating_sub(1).min(l.len());
        }
        offset += l.len();
    }
    text.len()
}

pub fn save_model(ensemble: &TreeEnsemble, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = model_to_json(ensemble)?;
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TreeEnsemble> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::testing::random_ensemble;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_lossless() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ens = random_ensemble(&mut rng, 3, 5, 4);
        ens.base_offset = 0.1 + 0.2;
        let back = model_from_json(&model_to_json(&ens).unwrap()).unwrap();
        assert_eq!(back, ens);
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.5..1.5)).collect();
            assert_eq!(
                back.predict(&x).unwrap().to_bits(),
                ens.predict(&x).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn truncated_file_names_record() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ens = random_ensemble(&mut rng, 2, 3, 3);
        let json = model_to_json(&ens).unwrap();
        let cut = json.rfind("\"nodes\"").unwrap() + 20;
        let err = model_from_json(&json[..cut]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("trees[2]"), "{msg}");
    }

    #[test]
    fn wrong_version() {
        let text = r#"{"version":7,"num_features":1,"base_offset":0,"trees":[]}"#;
        assert!(matches!(
            model_from_json(text),
            Err(Error::UnsupportedVersion { found: 7, .. })
        ));
    }

    #[test]
    fn invalid_structure_rejected() {
        let text = r#"{"version":1,"num_features":1,"base_offset":0,
            "trees":[{"nodes":[{"feature":2,"threshold":0.5,"left":1,"right":2},{"value":1},{"value":2}]}]}"#;
        let msg = model_from_json(text).unwrap_err().to_string();
        assert!(msg.contains("tree 0"), "{msg}");
    }
}
