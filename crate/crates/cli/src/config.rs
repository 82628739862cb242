use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::CliError;

/// Reads a TOML config file whose keys mirror the fields of `T`, falling
/// back to `default` when no file is given.
pub fn load<T: DeserializeOwned>(path: Option<&Path>, default: T) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(default);
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))
}

pub fn to_toml<T: Serialize>(value: &T) -> Result<String, CliError> {
    toml::to_string(value).map_err(|e| CliError::Io(format!("cannot encode config: {e}")))
}

/// What was run, echoed next to every set of outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: &'static str,
    pub config_path: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub jobs: Option<usize>,
    pub version: &'static str,
}
