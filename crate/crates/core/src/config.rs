//! Run configuration: presets, file overrides, dotted `key=value` overrides
//! and a stable hash of everything that shapes training.
//!
//! Layering is preset < file < flags. Files are TOML or JSON documents with
//! the same shape as the serialized [`RunConfig`]; flags address the same
//! keys with dots (`schedule.learning_rate=1e-3`).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::augmentation::AugmentConfig;
use crate::data::DatasetManifest;
use crate::evaluation::{cross_offsets, EvalConfig};
use crate::losses::LossConfig;
use crate::model::training::{Ablations, OptimizerKind, Schedule};
use crate::model::ModelConfig;
use crate::skeleton::{default_skeletal_graph, validate_graph, SkeletalGraph};
use crate::{Error, Result};

/// Environment variable overriding `data.root`.
pub const DATA_ENV: &str = "POSEFORGE_DATA";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Desk-scale: 2 stacks, 64×64 input, 20/10/10 epochs.
    #[default]
    Toy,
    /// Full-scale settings: 8 stacks, 256×256 input, 150/75/75 epochs.
    Paper,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toy" => Ok(Self::Toy),
            "paper" => Ok(Self::Paper),
            other => Err(Error::InvalidConfig(format!("unknown preset `{other}` (expected toy or paper)"))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Toy => "toy",
            Self::Paper => "paper",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset directory; `POSEFORGE_DATA` takes precedence when set.
    pub root: PathBuf,
    /// Generation parameters used by `gen`.
    pub manifest: DatasetManifest,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            root: PathBuf::from("data"),
            manifest: DatasetManifest::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub heatmap_sigma: f64,
    /// Root for run artifacts (checkpoints, logs, reports).
    pub out_dir: PathBuf,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub augment: AugmentConfig,
    pub eval: EvalConfig,
    pub schedule: Schedule,
    pub graph: SkeletalGraph,
    pub ablations: Ablations,
    pub data: DataConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::preset(Preset::Toy)
    }
}

impl RunConfig {
    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Toy => Self {
                seed: 0,
                heatmap_sigma: 1.0,
                out_dir: PathBuf::from("runs"),
                model: ModelConfig::default(),
                loss: LossConfig::default(),
                augment: AugmentConfig {
                    geometric: false,
                    ..AugmentConfig::default()
                },
                eval: EvalConfig {
                    perturbation_offsets: cross_offsets(2),
                    ..EvalConfig::default()
                },
                schedule: Schedule {
                    stage_epochs: [20, 10, 10],
                    learning_rate: 5e-4,
                    optimizer: OptimizerKind::Adam,
                    batch_size: 1,
                    ..Schedule::default()
                },
                graph: default_skeletal_graph(),
                ablations: Ablations::default(),
                data: DataConfig::default(),
            },
            Preset::Paper => {
                let model = ModelConfig {
                    num_stacks: 8,
                    hourglass_depth: 4,
                    base_channels: 256,
                    input_resolution: (256, 256),
                    msr_channels: 256,
                    ..ModelConfig::default()
                };
                Self {
                    seed: 0,
                    heatmap_sigma: 1.0,
                    out_dir: PathBuf::from("runs"),
                    loss: LossConfig::default(),
                    model,
                    augment: AugmentConfig::default(),
                    eval: EvalConfig::default(),
                    schedule: Schedule::default(),
                    graph: default_skeletal_graph(),
                    ablations: Ablations::default(),
                    data: DataConfig {
                        root: PathBuf::from("data"),
                        manifest: DatasetManifest {
                            resolution: (256, 256),
                            ..DatasetManifest::default()
                        },
                    },
                }
            }
        }
    }

    /// Preset, then an optional config file, then `key=value` overrides.
    pub fn load(preset: Preset, file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut value = serde_json::to_value(Self::preset(preset))?;
        if let Some(path) = file {
            merge(&mut value, read_document(path)?, "")?;
        }
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("override `{o}` is not of the form key=value")))?;
            set_dotted(&mut value, key.trim(), parse_scalar(raw.trim()))?;
        }
        let cfg: Self = serde_path_to_error::deserialize(value)
            .map_err(|e| Error::InvalidConfig(format!("{}: {}", e.path(), e.inner())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.heatmap_sigma > 0.0 && self.heatmap_sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "heatmap_sigma must be > 0, got {}",
                self.heatmap_sigma
            )));
        }
        self.model.validate()?;
        self.loss.validate()?;
        self.augment.validate()?;
        self.eval.validate()?;
        self.schedule.validate()?;
        self.data.manifest.validate()?;
        if !self.loss.scale_weights.is_empty() && self.loss.scale_weights.len() != self.model.hourglass_depth {
            return Err(Error::InvalidConfig(format!(
                "loss.scale_weights has {} entries but model.hourglass_depth is {}",
                self.loss.scale_weights.len(),
                self.model.hourglass_depth
            )));
        }
        if self.data.manifest.resolution != self.model.input_resolution {
            return Err(Error::InvalidConfig(format!(
                "data.manifest.resolution {:?} differs from model.input_resolution {:?}",
                self.data.manifest.resolution, self.model.input_resolution
            )));
        }
        if let Some(v) = validate_graph(&self.graph).first() {
            return Err(Error::InvalidConfig(format!("graph: {v}")));
        }
        Ok(())
    }

    /// Dataset root after applying `POSEFORGE_DATA`.
    pub fn data_root(&self) -> PathBuf {
        data_root_from(std::env::var_os(DATA_ENV).map(PathBuf::from), &self.data.root)
    }

    /// SHA-256 over the training-relevant fields. Paths and evaluation
    /// settings are excluded so the same checkpoint can be evaluated or
    /// relocated freely.
    pub fn config_hash(&self) -> String {
        let relevant = serde_json::json!({
            "seed": self.seed,
            "heatmap_sigma": self.heatmap_sigma,
            "model": self.model,
            "loss": self.loss,
            "augment": self.augment,
            "schedule": self.schedule,
            "graph": self.graph,
            "ablations": self.ablations,
        });
        // serde_json maps are ordered by key, so the text is canonical.
        let text = serde_json::to_string(&relevant).expect("config serializes");
        crate::data::hex(&Sha256::digest(text.as_bytes()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }
}

fn data_root_from(env: Option<PathBuf>, configured: &Path) -> PathBuf {
    match env {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => configured.to_path_buf(),
    }
}

/// Reads a TOML or JSON document, choosing by extension and falling back to
/// content sniffing.
pub fn read_document(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Missing {
        path: path.to_path_buf(),
        message: format!("cannot read config file: {e}"),
    })?;
    let is_json = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => true,
        Some("toml") => false,
        _ => text.trim_start().starts_with('{'),
    };
    let value = if is_json {
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?
    } else {
        let t: toml::Value = toml::from_str(&text)?;
        serde_json::to_value(t)?
    };
    if !value.is_object() {
        return Err(Error::InvalidConfig(format!("{}: top level must be a table", path.display())));
    }
    Ok(value)
}

/// JSON literal if it parses, otherwise a bare string.
fn parse_scalar(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

/// Deep-merges `over` into `base`. Keys absent from `base` are rejected.
/// A single-key object (an externally tagged enum) is replaced wholesale
/// when the override names a different variant.
fn merge(base: &mut Value, over: Value, prefix: &str) -> Result<()> {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            if b.len() == 1 && o.len() == 1 && !o.keys().any(|k| b.contains_key(k)) {
                *b = o;
                return Ok(());
            }
            for (k, v) in o {
                let path = join(prefix, &k);
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v, &path)?,
                    None => return Err(Error::InvalidConfig(format!("unknown config key `{path}`"))),
                }
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}

fn set_dotted(root: &mut Value, key: &str, value: Value) -> Result<()> {
    if key.is_empty() {
        return Err(Error::InvalidConfig("empty override key".into()));
    }
    let mut over = value;
    for part in key.rsplit('.') {
        let mut m = Map::new();
        m.insert(part.to_string(), over);
        over = Value::Object(m);
    }
    merge(root, over, "")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        RunConfig::preset(Preset::Toy).validate().unwrap();
        RunConfig::preset(Preset::Paper).validate().unwrap();
        let p = RunConfig::preset(Preset::Paper);
        assert_eq!(p.model.num_stacks, 8);
        assert_eq!(p.model.input_resolution, (256, 256));
        assert_eq!(p.schedule.stage_epochs, [150, 75, 75]);
        assert_eq!(p.schedule.learning_rate, 5e-4);
        let t = RunConfig::preset(Preset::Toy);
        assert_eq!(t.schedule.stage_epochs, [20, 10, 10]);
        assert_eq!((t.model.num_stacks, t.model.hourglass_depth), (2, 3));
    }

    #[test]
    fn dotted_override_and_unknown_key() {
        let c = RunConfig::load(Preset::Toy, None, &["schedule.learning_rate=0.01".into(), "seed=9".into()]).unwrap();
        assert_eq!(c.schedule.learning_rate, 0.01);
        assert_eq!(c.seed, 9);
        let e = RunConfig::load(Preset::Toy, None, &["schedule.lr=1".into()]).unwrap_err();
        assert!(e.to_string().contains("schedule.lr"), "{e}");
        assert!(e.is_user_error());
        assert!(RunConfig::load(Preset::Toy, None, &["seed".into()]).is_err());
        assert!(RunConfig::load(Preset::Toy, None, &["seed=\"x\"".into()]).is_err());
    }

    #[test]
    fn enum_variant_override() {
        let c = RunConfig::load(Preset::Toy, None, &["augment.patch_side={\"pixels\":6}".into()]).unwrap();
        assert_eq!(c.augment.patch_side, crate::augmentation::PatchSide::Pixels(6));
        let c = RunConfig::load(Preset::Toy, None, &["schedule.optimizer=sgd".into()]).unwrap();
        assert_eq!(c.schedule.optimizer, OptimizerKind::Sgd);
    }

    #[test]
    fn hash_ignores_paths_and_eval() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.out_dir = "elsewhere".into();
        b.data.root = "x".into();
        b.eval.tau_s = 0.9;
        assert_eq!(a.config_hash(), b.config_hash());
        b.seed = 1;
        assert_ne!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash().len(), 64);
    }

    #[test]
    fn toml_round_trip() {
        let c = RunConfig::preset(Preset::Paper);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, c.to_toml().unwrap()).unwrap();
        assert_eq!(RunConfig::load(Preset::Toy, Some(&p), &[]).unwrap(), c);
    }

    #[test]
    fn env_root_wins_unless_empty() {
        let cfg = Path::new("data");
        assert_eq!(data_root_from(Some("/d".into()), cfg), PathBuf::from("/d"));
        assert_eq!(data_root_from(Some("".into()), cfg), PathBuf::from("data"));
        assert_eq!(data_root_from(None, cfg), PathBuf::from("data"));
    }
}
