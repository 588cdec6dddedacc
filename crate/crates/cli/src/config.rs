//! Run configuration files: training settings plus paths, in TOML.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use canet::train::TrainConfig;
use serde::{Deserialize, Serialize};

/// Name of the resolved config written next to every training run.
pub const RESOLVED_NAME: &str = "config.toml";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Manifest file or the directory holding `manifest.json`.
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// `path`, or the defaults when absent.
    pub fn read_or_default(path: Option<&Path>) -> Result<Self> {
        path.map(Self::read)
            .transpose()
            .map(Option::unwrap_or_default)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml()?).with_context(|| format!("writing {}", path.display()))
    }
}

/// `path` itself if it is a file, else `path/manifest.json`.
pub fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join("manifest.json")
    } else {
        path.to_path_buf()
    }
}
