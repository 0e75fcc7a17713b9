//! Checkpoint directory layout:
//!
//! ```text
//! <dir>/manifest.json       {"format", "config", "tensors": [{"name", "file", "shape"}]}
//! <dir>/<name>.atkd         one ATKD tensor per parameter slot
//! ```
//!
//! Slot names follow [`Params::slots`](crate::Params::slots), e.g.
//! `encoder.0.wq`, `decoder.embedding`, `joint.out.w`. Vectors are stored as
//! rank-1 tensors, matrices as `[fan_in, fan_out]`.

use std::fs;
use std::path::Path;

use atkd_core::io::{load_atkd, save_atkd};
use atkd_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::{ModelError, Result};
use crate::params::{Params, ToyTransducer};

pub const CHECKPOINT_FORMAT: &str = "atkd-checkpoint/1";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    file: String,
    shape: Vec<usize>,
}

pub fn save_checkpoint(model: &ToyTransducer, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut tensors = Vec::new();
    for (name, view) in model.params.slots() {
        let file = format!("{name}.atkd");
        let shape = view.shape().to_vec();
        let t = Tensor::new(shape.clone(), view.iter().copied().collect())?;
        save_atkd(&t, dir.join(&file))?;
        tensors.push(TensorEntry { name, file, shape });
    }
    let manifest = Manifest {
        format: CHECKPOINT_FORMAT.to_string(),
        config: model.config.clone(),
        tensors,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<ToyTransducer> {
    let dir = dir.as_ref();
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    if manifest.format != CHECKPOINT_FORMAT {
        return Err(ModelError::Checkpoint(format!("unknown format {:?}", manifest.format)));
    }
    manifest.config.validate()?;
    let mut params = Params::zeros(&manifest.config);
    let slots = params.slots_mut();
    if slots.len() != manifest.tensors.len() {
        return Err(ModelError::Checkpoint(format!(
            "manifest lists {} tensors, config needs {}",
            manifest.tensors.len(),
            slots.len()
        )));
    }
    for ((name, mut view), entry) in slots.into_iter().zip(&manifest.tensors) {
        if name != entry.name {
            return Err(ModelError::Checkpoint(format!("expected {name}, found {}", entry.name)));
        }
        if entry.file.contains(['/', '\\']) {
            return Err(ModelError::Checkpoint(format!("bad file name {}", entry.file)));
        }
        let t = load_atkd(dir.join(&entry.file))?;
        if t.shape() != view.shape() {
            return Err(ModelError::Checkpoint(format!(
                "{name}: stored {:?}, expected {:?}",
                t.shape(),
                view.shape()
            )));
        }
        view.iter_mut().zip(t.data()).for_each(|(d, s)| *d = *s);
    }
    Ok(ToyTransducer {
        config: manifest.config,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ContextPolicy;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = ToyTransducer::new(ModelConfig::new(6, 4, 5, ContextPolicy::STREAMING, 9)).unwrap();
        save_checkpoint(&m, dir.path()).unwrap();
        assert_eq!(load_checkpoint(dir.path()).unwrap(), m);
    }

    #[test]
    fn detects_shape_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let m = ToyTransducer::new(ModelConfig::new(6, 4, 5, ContextPolicy::Full, 9)).unwrap();
        save_checkpoint(&m, dir.path()).unwrap();
        save_atkd(&Tensor::zeros(vec![2, 2]).unwrap(), dir.path().join("joint.enc.atkd")).unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(ModelError::Checkpoint(_))));
    }
}
