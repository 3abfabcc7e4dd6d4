//! Checkpoint directories: `params.bin` (parameter blob) next to
//! `checkpoint.json` (metadata).

use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use poseforge_nn::ParamStore;
use serde::{Deserialize, Serialize};

use super::training::{Ablations, EpochRecord};
use super::{ModelConfig, PoseNet};
use crate::{Error, Result};

pub const PARAMS_FILE: &str = "params.bin";
pub const META_FILE: &str = "checkpoint.json";

/// Learning-rate plateau state, kept so interrupted runs resume exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauState {
    pub learning_rate: f64,
    pub best: Option<f64>,
    pub bad_epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    /// Hash of the configuration that produced the checkpoint.
    pub config_hash: String,
    /// Stage the parameters come from (1-3).
    pub stage: usize,
    /// Epochs completed within `stage`.
    pub epoch: usize,
    /// Whether `stage` ran to completion.
    pub stage_complete: bool,
    pub seed: u64,
    pub ablations: Ablations,
    pub plateau: PlateauState,
    pub history: Vec<EpochRecord>,
}

pub fn save_checkpoint(dir: &Path, net: &PoseNet, meta: &CheckpointMeta) -> Result<()> {
    fs::create_dir_all(dir)?;
    // Write to temporaries first so a crash never leaves a torn checkpoint.
    let params_tmp = dir.join(format!("{PARAMS_FILE}.tmp"));
    let meta_tmp = dir.join(format!("{META_FILE}.tmp"));
    net.params().write_blob(BufWriter::new(fs::File::create(&params_tmp)?))?;
    fs::write(&meta_tmp, serde_json::to_string_pretty(meta)? + "\n")?;
    fs::rename(params_tmp, dir.join(PARAMS_FILE))?;
    fs::rename(meta_tmp, dir.join(META_FILE))?;
    Ok(())
}

pub fn load_meta(dir: &Path) -> Result<CheckpointMeta> {
    let path = dir.join(META_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::Missing {
        path: path.clone(),
        message: format!("cannot read checkpoint metadata: {e}"),
    })?;
    Ok(serde_json::from_str(&text)?)
}

pub fn load_checkpoint(dir: &Path) -> Result<(PoseNet, CheckpointMeta)> {
    let meta = load_meta(dir)?;
    let mut net = PoseNet::new(meta.model.clone(), 0)?;
    let path = dir.join(PARAMS_FILE);
    let file = fs::File::open(&path).map_err(|e| Error::Missing {
        path: path.clone(),
        message: format!("cannot read parameters: {e}"),
    })?;
    let stored = ParamStore::read_blob(BufReader::new(file))?;
    net.params_mut()
        .load_from(&stored)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok((net, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ModelConfig {
            base_channels: 4,
            msr_channels: 4,
            input_resolution: (32, 32),
            ..Default::default()
        };
        let net = PoseNet::new(cfg.clone(), 5).unwrap();
        let meta = CheckpointMeta {
            model: cfg,
            config_hash: "abc".into(),
            stage: 2,
            epoch: 3,
            stage_complete: false,
            seed: 5,
            ablations: Ablations::default(),
            plateau: PlateauState {
                learning_rate: 1e-4,
                best: Some(0.5),
                bad_epochs: 1,
            },
            history: Vec::new(),
        };
        save_checkpoint(dir.path(), &net, &meta).unwrap();
        let (loaded, m) = load_checkpoint(dir.path()).unwrap();
        assert_eq!(m, meta);
        for id in net.params().ids() {
            assert_eq!(net.params().get(id), loaded.params().get(id));
        }
        assert!(load_checkpoint(&dir.path().join("nope")).is_err());
    }
}
