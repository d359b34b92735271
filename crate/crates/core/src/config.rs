//! Run configuration shared by every command: one TOML document with
//! `model`, `train`, `features` and `data` sections. Every key is required
//! and unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SeldError};
use crate::features::FeatureConfig;
use crate::labels::{DecodeConfig, DistanceUnit};
use crate::model::SeldModelConfig;
use crate::train::{label_hop_samples, SyntheticSceneConfig, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Unit of the distance column in metadata CSVs.
    pub distance_unit: DistanceUnit,
    pub decode: DecodeConfig,
    pub synth: SyntheticSceneConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            distance_unit: DistanceUnit::Meters,
            decode: DecodeConfig::default(),
            synth: SyntheticSceneConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: SeldModelConfig,
    pub train: TrainConfig,
    pub features: FeatureConfig,
    pub data: DataConfig,
}

impl RunConfig {
    /// Miniature network with a learning rate suited to short overfitting
    /// runs on a handful of clips.
    pub fn toy() -> Self {
        Self {
            model: SeldModelConfig::toy(),
            train: TrainConfig {
                lr: 1e-3,
                batch_size: 8,
                epochs: 2,
                ..TrainConfig::default()
            },
            ..Self::default()
        }
    }

    /// Checks each section and that the sections agree with each other.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.features.stft.validate()?;
        self.data.synth.validate()?;
        let bad = |m: String| Err(SeldError::Config(m));
        if self.model.n_mels != self.features.mel.n_mels {
            return bad(format!(
                "model.n_mels = {} but features.mel.n_mels = {}",
                self.model.n_mels, self.features.mel.n_mels
            ));
        }
        if self.model.classes != self.data.synth.classes {
            return bad(format!(
                "model.classes = {} but data.synth.classes = {}",
                self.model.classes, self.data.synth.classes
            ));
        }
        let ds = self.model.time_downsample();
        if self.features.segment_frames % ds != 0 {
            return bad(format!(
                "features.segment_frames = {} is not a multiple of the {ds}x time downsampling",
                self.features.segment_frames
            ));
        }
        let label_hop = label_hop_samples(self.features.stft.sample_rate);
        if ds * self.features.stft.hop_length != label_hop {
            return bad(format!(
                "output frames span {} samples but labels are {label_hop} samples apart",
                ds * self.features.stft.hop_length
            ));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| SeldError::Config(e.to_string()))
    }

    /// Parses a TOML document, applies `key.path=value` overrides and
    /// validates the result.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| SeldError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| SeldError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text, overrides).map_err(|e| match e {
            SeldError::Config(m) => SeldError::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }
}

/// Sets `section.key=value`. The value is read as a TOML value and falls
/// back to a plain string. The key must already exist.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| SeldError::Config(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    let value: toml::Value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| SeldError::Config(format!("empty override key in `{assignment}`")))?;
    let mut cur = table;
    for p in parts {
        cur = cur
            .get_mut(p)
            .and_then(toml::Value::as_table_mut)
            .ok_or_else(|| SeldError::Config(format!("unknown config section `{p}` in `{key}`")))?;
    }
    match cur.get_mut(last) {
        Some(slot) => {
            *slot = value;
            Ok(())
        }
        None => Err(SeldError::Config(format!("unknown config key `{key}`"))),
    }
}
