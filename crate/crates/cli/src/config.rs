//! JSON configuration files applied as overrides on top of defaults.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use htgnn_core::model::ModelConfig;
use htgnn_core::train::TrainConfig;

use crate::CliError;

/// `--config` file of `train` and `ablate`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    #[serde(default)]
    pub model: Option<Value>,
    #[serde(default)]
    pub train: Option<Value>,
}

pub fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("invalid JSON in {}: {e}", path.display())))
}

fn merge(base: &mut Value, patch: &Value, path: &str) -> Result<(), CliError> {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => merge_objects(b, p, path),
        (b, p) => {
            *b = p.clone();
            Ok(())
        }
    }
}

fn merge_objects(base: &mut Map<String, Value>, patch: &Map<String, Value>, path: &str) -> Result<(), CliError> {
    for (k, v) in patch {
        let key = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
        match base.get_mut(k) {
            Some(slot) if slot.is_object() && v.is_object() => merge(slot, v, &key)?,
            Some(slot) => *slot = v.clone(),
            None => return Err(CliError::usage(format!("unknown config key `{key}`"))),
        }
    }
    Ok(())
}

/// Applies a partial JSON object onto `base`; unknown keys are errors.
pub fn overlay<T: Serialize + DeserializeOwned>(base: &T, patch: Option<&Value>, what: &str) -> Result<T, CliError> {
    let Some(patch) = patch else {
        return serde_json::from_value(serde_json::to_value(base).map_err(CliError::internal)?)
            .map_err(|e| CliError::usage(format!("{what}: {e}")));
    };
    if !patch.is_object() {
        return Err(CliError::usage(format!("{what} config must be a JSON object")));
    }
    let mut value = serde_json::to_value(base).map_err(CliError::internal)?;
    if let (Value::Object(b), Value::Object(p)) = (&mut value, patch) {
        merge_objects(b, p, "")
            .map_err(|e| CliError::usage(format!("{what}: {}", e.message)))?;
    }
    serde_json::from_value(value).map_err(|e| CliError::usage(format!("{what}: {e}")))
}

/// Model and training settings after applying an optional config file.
pub fn run_configs(
    path: Option<&Path>,
    model: ModelConfig,
    train: TrainConfig,
) -> Result<(ModelConfig, TrainConfig), CliError> {
    let file = match path {
        Some(p) => serde_json::from_value::<RunConfigFile>(read_json(p)?)
            .map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?,
        None => RunConfigFile::default(),
    };
    let model = overlay(&model, file.model.as_ref(), "model")?;
    let train = overlay(&train, file.train.as_ref(), "train")?;
    if file.model.as_ref().and_then(|m| m.get("variant")).is_some() {
        return Err(CliError::usage("model.variant is set by --variant, not by the config file"));
    }
    model.validate().map_err(|e| CliError::usage(e.to_string()))?;
    train.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok((model, train))
}
