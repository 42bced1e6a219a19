//! Config files: flat JSON objects whose keys mirror [`SimulationConfig`].

use std::fs;
use std::path::{Path, PathBuf};

use policysim_core::SimulationConfig;
use serde_json::{Map, Value};

use crate::CliError;

/// Values given on the command line. Each one replaces the file's value.
#[derive(Debug, Clone, Default)]
pub struct ConfigOverrides {
    pub data: Option<PathBuf>,
    pub seed: Option<u64>,
    pub replicates: Option<usize>,
    pub threads: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

impl ConfigOverrides {
    fn apply(&self, map: &mut Map<String, Value>) {
        if let Some(d) = &self.data {
            map.insert("data".into(), Value::from(d.display().to_string()));
        }
        if let Some(s) = self.seed {
            map.insert("seed".into(), Value::from(s));
        }
        if let Some(r) = self.replicates {
            map.insert("replicates".into(), Value::from(r));
        }
        if let Some(t) = self.threads {
            map.insert("threads".into(), Value::from(t));
        }
        if let Some(o) = &self.output_dir {
            map.insert("output_dir".into(), Value::from(o.display().to_string()));
        }
    }
}

/// Builds a validated config from JSON text plus command-line overrides.
pub fn parse_config_str(text: &str, overrides: &ConfigOverrides) -> Result<SimulationConfig, CliError> {
    let value: Value = serde_json::from_str(text).map_err(|e| CliError::Config(format!("not valid JSON: {e}")))?;
    let Value::Object(mut map) = value else {
        return Err(CliError::Config("config must be a flat JSON object".into()));
    };
    if let Some(key) = map.keys().find(|k| !SimulationConfig::KEYS.contains(&k.as_str())) {
        return Err(CliError::Config(format!(
            "unknown key `{key}`; valid keys: {}",
            SimulationConfig::KEYS.join(", ")
        )));
    }
    overrides.apply(&mut map);
    for required in ["seed", "data"] {
        if !map.contains_key(required) {
            return Err(CliError::Config(format!(
                "missing required key `{required}` (there is no default)"
            )));
        }
    }
    let config: SimulationConfig =
        serde_json::from_value(Value::Object(map)).map_err(|e| CliError::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

/// Reads a config file; without a file only the overrides are used.
pub fn parse_config(path: Option<&Path>, overrides: &ConfigOverrides) -> Result<SimulationConfig, CliError> {
    let text = match path {
        Some(p) => fs::read_to_string(p).map_err(|source| CliError::Read {
            path: p.to_path_buf(),
            source,
        })?,
        None => "{}".to_string(),
    };
    parse_config_str(&text, overrides)
}
