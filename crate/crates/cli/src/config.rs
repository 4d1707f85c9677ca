//! JSON configuration mirroring the command-line flags.
//!
//! A config file is a flat object whose keys are flag names without the
//! leading dashes (`"alpha"`, `"alpha-grid"`, `"tol"`, ...). Underscores are
//! accepted in place of hyphens. Values given on the command line win.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use crate::UsageError;

#[derive(Debug, Default)]
pub struct Config {
    values: Map<String, Value>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, UsageError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("config {} is not valid JSON: {e}", path.display())))?;
        let Value::Object(raw) = value else {
            return Err(UsageError(format!("config {} must be a JSON object", path.display())));
        };
        let values = raw.into_iter().map(|(k, v)| (k.replace('_', "-"), v)).collect();
        Ok(Self { values })
    }

    /// The flag value if given, else the config entry, else `default`.
    pub fn pick<T: DeserializeOwned>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, UsageError> {
        Ok(self.pick_opt(flag, key)?.unwrap_or(default))
    }

    pub fn pick_opt<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, UsageError> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| UsageError(format!("config key '{key}': {e}"))),
        }
    }

    /// Boolean switches: a set flag wins, otherwise the config decides.
    pub fn switch(&self, flag: bool, key: &str) -> Result<bool, UsageError> {
        Ok(flag || self.pick_opt::<bool>(None, key)?.unwrap_or(false))
    }
}
