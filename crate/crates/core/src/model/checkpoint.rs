//! Model checkpoints: parameter files plus an architecture manifest.

use std::fs;
use std::path::Path;

use super::{Architecture, MandateModel, ModelError};
use crate::autodiff::{load_checkpoint, save_checkpoint};

pub const MODEL_MANIFEST: &str = "model.json";

pub fn save_model(model: &MandateModel, dir: impl AsRef<Path>) -> Result<(), ModelError> {
    let dir = dir.as_ref();
    save_checkpoint(&model.params, dir)?;
    let path = dir.join(MODEL_MANIFEST);
    let mut text = serde_json::to_string_pretty(&model.arch).map_err(|e| ModelError::Checkpoint {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| ModelError::Checkpoint { path: path.display().to_string(), message: e.to_string() })
}

/// Load a checkpoint and check that its parameters have exactly the
/// layout the manifest implies.
pub fn load_model(dir: impl AsRef<Path>) -> Result<MandateModel, ModelError> {
    let dir = dir.as_ref();
    let path = dir.join(MODEL_MANIFEST);
    let err = |message: String| ModelError::Checkpoint { path: path.display().to_string(), message };
    let text = fs::read_to_string(&path).map_err(|e| err(e.to_string()))?;
    let arch: Architecture = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
    let arch = Architecture::new(arch.config, arch.feature_dim, arch.num_relations, arch.anchors, arch.seed)
        .map_err(|e| err(e.to_string()))?;
    let params = load_checkpoint(dir)?;
    let expected = arch.init_params()?;
    if expected.len() != params.len() {
        return Err(err(format!("{} parameters stored, architecture needs {}", params.len(), expected.len())));
    }
    for (name, t) in expected.iter() {
        match params.get(name) {
            Some(p) if p.shape() == t.shape() => {}
            Some(p) => return Err(err(format!("parameter {name} has shape {:?}, expected {:?}", p.shape(), t.shape()))),
            None => return Err(err(format!("parameter {name} missing"))),
        }
    }
    Ok(MandateModel { arch, params })
}
