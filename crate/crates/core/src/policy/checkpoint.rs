use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{PolicyConfig, PolicyParams};
use super::tensor::Mat;
use super::PolicyError;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    config: PolicyConfig,
    /// Set once the context projection carries depot coordinates.
    expanded: bool,
    tensors: Vec<NamedTensor>,
}

impl PolicyParams {
    pub fn to_json(&self) -> String {
        let ck = Checkpoint {
            version: CHECKPOINT_VERSION,
            config: *self.config(),
            expanded: self.is_expanded(),
            tensors: self
                .names()
                .iter()
                .zip(self.tensors())
                .map(|(name, m)| NamedTensor {
                    name: name.clone(),
                    rows: m.rows,
                    cols: m.cols,
                    data: m.data.clone(),
                })
                .collect(),
        };
        serde_json::to_string(&ck).expect("checkpoint serialises")
    }

    pub fn from_json(s: &str) -> Result<PolicyParams, PolicyError> {
        let ck: Checkpoint = serde_json::from_str(s).map_err(|e| PolicyError::Checkpoint(e.to_string()))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(PolicyError::Checkpoint(format!(
                "unsupported version {} (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        let mut named = Vec::with_capacity(ck.tensors.len());
        for t in ck.tensors {
            if t.data.len() != t.rows * t.cols {
                return Err(PolicyError::ShapeMismatch(format!(
                    "{} declares {}x{} but holds {} values",
                    t.name,
                    t.rows,
                    t.cols,
                    t.data.len()
                )));
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(PolicyError::Checkpoint(format!("{} holds non-finite values", t.name)));
            }
            named.push((t.name, Mat::from_vec(t.rows, t.cols, t.data)));
        }
        PolicyParams::from_named(ck.config, ck.expanded, named)
    }

    pub fn save(&self, path: &Path) -> Result<(), PolicyError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<PolicyParams, PolicyError> {
        PolicyParams::from_json(&fs::read_to_string(path)?)
    }
}
