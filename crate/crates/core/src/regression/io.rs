use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FittedModel;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: &str = "1.0";

/// On-disk model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: String,
    pub tool_version: String,
    /// Whatever produced the model (command line, options, seed).
    #[serde(default)]
    pub config: serde_json::Value,
    pub model: FittedModel,
}

impl ModelFile {
    pub fn new(model: FittedModel, config: serde_json::Value) -> Self {
        Self {
            format_version: FORMAT_VERSION.to_string(),
            tool_version: crate::VERSION.to_string(),
            config,
            model,
        }
    }

    /// Parses a model document, accepting any minor version of the current major.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let version = value
            .get("format_version")
            .and_then(|v| v.as_str())
            .unwrap_or_default()
            .to_string();
        let major = |v: &str| v.split('.').next().map(str::to_string);
        if major(&version) != major(FORMAT_VERSION) || version.is_empty() {
            return Err(Error::UnsupportedVersion(version));
        }
        Ok(serde_json::from_value(value)?)
    }
}

pub fn save_model(path: impl AsRef<Path>, file: &ModelFile) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(file)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    ModelFile::from_json(&std::fs::read_to_string(path)?)
}
