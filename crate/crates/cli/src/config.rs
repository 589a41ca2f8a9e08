//! Parameter resolution: flags > config file > defaults.

use std::path::Path;

use clap::parser::ValueSource;
use clap::ArgMatches;
use serde::{de::DeserializeOwned, Serialize};
use serde_json::{Map, Value};

use crate::cli::Format;
use crate::CliError;

/// Parameters and run-level keys read from `--config`.
#[derive(Default)]
pub struct ConfigFile {
    pub params: Map<String, Value>,
    pub seed: Option<u64>,
    pub format: Option<Format>,
}

/// Reads plain parameter objects, sidecar manifests and JSON data outputs
/// (whose `manifest` key is used).
pub fn load(path: &Path, command: &str) -> Result<ConfigFile, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {} is not JSON: {e}", path.display())))?;
    let Value::Object(mut obj) = value else {
        return Err(CliError::Usage("config must be a JSON object".into()));
    };
    if let Some(Value::Object(inner)) = obj.remove("manifest") {
        obj = inner;
    }
    let mut out = ConfigFile::default();
    if let Some(seed) = obj.remove("seed") {
        out.seed = Some(serde_json::from_value(seed).map_err(|e| CliError::Usage(format!("config seed: {e}")))?);
    }
    if let Some(format) = obj.remove("format") {
        out.format = Some(serde_json::from_value(format).map_err(|e| CliError::Usage(format!("config format: {e}")))?);
    }
    if let (Some(Value::String(cmd)), Some(Value::Object(params))) = (obj.get("command"), obj.get("config")) {
        if cmd != command {
            return Err(CliError::Usage(format!("config is a manifest for `{cmd}`, not `{command}`")));
        }
        out.params = params.clone();
    } else {
        out.params = obj;
    }
    Ok(out)
}

/// Overlays config values on the parsed arguments wherever the flag was not
/// given on the command line.
pub fn resolve<T: Serialize + DeserializeOwned>(parsed: &T, matches: &ArgMatches, file: &ConfigFile) -> Result<T, CliError> {
    let Value::Object(mut merged) = serde_json::to_value(parsed).expect("arguments serialize") else {
        unreachable!("argument structs serialize to objects")
    };
    for (key, value) in &file.params {
        if !merged.contains_key(key) {
            return Err(CliError::Usage(format!("unknown config key `{key}`")));
        }
        let explicit = matches!(matches.try_get_raw(key), Ok(Some(_)))
            && matches.value_source(key) == Some(ValueSource::CommandLine);
        if !explicit {
            merged.insert(key.clone(), value.clone());
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::Usage(format!("invalid config: {e}")))
}
