//! Layered configuration: preset defaults, then the TOML file, then flags.

use std::path::Path;

use gazemtl::data::SynthConfig;
use gazemtl::model::{ModelConfig, ScalePreset};
use gazemtl::train::{SweepSpec, TrainConfig};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Default)]
pub struct FileConfig {
    table: toml::Table,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| gazemtl::Error::Io { path: path.into(), source: e })?;
        let table: toml::Table = text
            .parse()
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        for key in table.keys() {
            if !["model", "train", "synth", "sweep"].contains(&key.as_str()) {
                return Err(CliError::Usage(format!("{}: unknown table [{key}]", path.display())));
            }
        }
        Ok(FileConfig { table })
    }

    /// `base` with the keys of table `[name]` laid over it.
    fn layer<T: Serialize + DeserializeOwned>(&self, name: &str, base: T) -> Result<T, CliError> {
        let Some(overlay) = self.table.get(name) else { return Ok(base) };
        let overlay = overlay
            .as_table()
            .ok_or_else(|| CliError::Usage(format!("config: [{name}] must be a table")))?;
        let mut merged = toml::Table::try_from(&base).map_err(|e| CliError::Usage(format!("config [{name}]: {e}")))?;
        for (k, v) in overlay {
            merged.insert(k.clone(), v.clone());
        }
        merged.try_into().map_err(|e| CliError::Usage(format!("config [{name}]: {e}")))
    }

    pub fn model(&self, preset: ScalePreset) -> Result<ModelConfig, CliError> {
        let cfg = self.layer("model", ModelConfig::preset(preset))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train(&self, preset: ScalePreset) -> Result<TrainConfig, CliError> {
        let base = match preset {
            ScalePreset::Paper => TrainConfig::default(),
            ScalePreset::Desk => TrainConfig::desk(),
        };
        self.layer("train", base)
    }

    pub fn synth(&self, model: &ModelConfig) -> Result<SynthConfig, CliError> {
        self.layer("synth", SynthConfig::for_shape(model.channels, model.timesteps))
    }

    pub fn sweep(&self) -> Result<SweepSpec, CliError> {
        self.layer("sweep", SweepSpec::default())
    }
}
