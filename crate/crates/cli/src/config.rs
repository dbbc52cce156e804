//! Run configuration files.
//!
//! A config is a JSON object. `preset` picks the base training settings
//! (`"full"` or `"desk"`), `train` overrides individual fields of that
//! base, and `paths` may supply any file argument that was not given on
//! the command line. Every field is optional; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use tempoden_core::trainer::TrainConfig;
use tempoden_core::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Full,
    Desk,
}

impl Preset {
    pub fn base(self) -> TrainConfig {
        match self {
            Preset::Full => TrainConfig::default(),
            Preset::Desk => TrainConfig::desk(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clean: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noisy: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    preset: Preset,
    #[serde(default)]
    train: Option<Value>,
    #[serde(default)]
    paths: Paths,
}

/// A config file after the preset and overrides have been applied.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub preset: Preset,
    pub train: TrainConfig,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: Preset::Full,
            train: TrainConfig::default(),
            paths: Paths::default(),
        }
    }
}

/// Recursively overlays `patch` on `base`; objects merge, anything else
/// replaces.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

impl RunConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let bad = |e: serde_json::Error| Error::Format {
            path: origin.to_path_buf(),
            detail: e.to_string(),
        };
        let raw: RawConfig = serde_json::from_str(text).map_err(bad)?;
        let mut train = serde_json::to_value(raw.preset.base()).map_err(bad)?;
        if let Some(patch) = raw.train {
            if !patch.is_object() {
                return Err(Error::Format {
                    path: origin.to_path_buf(),
                    detail: "`train` must be an object".into(),
                });
            }
            merge(&mut train, patch);
        }
        let train: TrainConfig = serde_json::from_value(train).map_err(bad)?;
        Ok(Self {
            preset: raw.preset,
            train,
            paths: raw.paths,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text, path)
    }

    /// Loads `path` if given, else the full-size defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}
