//! Experiment configuration files and manifests.
//!
//! A configuration is TOML with `[data]`, `[model]`, `[train]` and `[split]`
//! tables. A manifest is the fully resolved configuration plus a `[run]`
//! table, so any manifest can be fed back through `--config`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use timecatcher_core::data::SplitSpec;
use timecatcher_core::model::ModelConfig;
use timecatcher_core::train::TrainConfig;

use crate::args::ModelOverrides;
use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// CSV dataset; relative paths resolve against the working directory.
    pub path: Option<PathBuf>,
}

/// What was run, where the outputs went and how long it took.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunInfo {
    pub command: String,
    pub version: String,
    pub seeds: Vec<u64>,
    pub threads: usize,
    pub artifacts: BTreeMap<String, PathBuf>,
    pub started_unix: u64,
    pub elapsed_secs: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub split: SplitSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run: Option<RunInfo>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("invalid configuration: {}", e.message())))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Usage(format!("cannot encode configuration: {e}")))
    }

    /// Defaults, then the file at `path` if any, then the flags.
    pub fn resolve(path: Option<&Path>, overrides: &ModelOverrides) -> CliResult<Self> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        cfg.run = None;
        overrides.apply(&mut cfg);
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.model.validate().map_err(crate::error::input)?;
        self.train.validate().map_err(crate::error::input)?;
        self.split.validate().map_err(crate::error::input)?;
        Ok(())
    }

    pub fn data_path(&self) -> CliResult<&Path> {
        self.data
            .path
            .as_deref()
            .ok_or_else(|| CliError::Usage("no dataset given; pass --data or set [data] path".into()))
    }
}
