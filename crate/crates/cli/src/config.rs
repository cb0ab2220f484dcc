//! TOML run configuration: one optional section per subcommand, each merged
//! over its defaults. Unknown keys anywhere are rejected with the offending
//! key path in the error.

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;
use ticketlab_core::pipeline::PipelineConfig;
use ticketlab_core::theory::{GramConcentrationConfig, Theorem1Config, Theorem2Config};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub thm1: Option<Theorem1Config>,
    pub thm2: Option<Theorem2Config>,
    pub gram: Option<GramConcentrationConfig>,
    pub pipeline: Option<PipelineConfig>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(FileConfig::default()),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                let cfg: FileConfig = toml::from_str(&text)
                    .with_context(|| format!("parsing config {}", path.display()))?;
                Ok(cfg)
            }
        }
    }
}

/// The effective (post-default, post-flag) config echoed next to the outputs.
pub fn echo_toml<T: Serialize>(section: &str, cfg: &T) -> Result<String> {
    let mut root = toml::map::Map::new();
    root.insert(section.to_string(), toml::Value::try_from(cfg)?);
    Ok(toml::to_string_pretty(&toml::Value::Table(root))?)
}
