//! Option sources, lowest priority first: the `EPMPD_SEED` environment
//! variable, command-line flags, then a `--config` JSON file whose keys
//! replace the matching options.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::CliError;

pub const SEED_ENV: &str = "EPMPD_SEED";

/// The seed given on the command line, else `EPMPD_SEED`, else 0.
pub fn resolve_seed(flag: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

/// Replaces fields of `base` with the keys of the JSON object in `path`.
/// Unknown keys are rejected.
pub fn overlay<T: Serialize + DeserializeOwned>(base: T, path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else { return Ok(base) };
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let overrides: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    overlay_value(base, overrides).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn overlay_value<T: Serialize + DeserializeOwned>(base: T, overrides: Value) -> Result<T, String> {
    let Value::Object(overrides) = overrides else {
        return Err("config must be a JSON object".into());
    };
    let mut merged = serde_json::to_value(base).map_err(|e| e.to_string())?;
    let fields = merged.as_object_mut().ok_or("options are not a JSON object")?;
    for (k, v) in overrides {
        if !fields.contains_key(&k) {
            let mut known: Vec<&String> = fields.keys().collect();
            known.sort();
            return Err(format!("unknown option {k:?}; expected one of {known:?}"));
        }
        fields.insert(k, v);
    }
    serde_json::from_value(merged).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use serde::Deserialize;
    use serde_json::json;

    use super::*;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Opts {
        seed: u64,
        clients: Vec<u32>,
    }

    #[test]
    fn config_keys_win() {
        let base = Opts {
            seed: 1,
            clients: vec![4],
        };
        let got = overlay_value(base, json!({"clients": [8, 16]})).unwrap();
        assert_eq!(
            got,
            Opts {
                seed: 1,
                clients: vec![8, 16]
            }
        );
    }

    #[test]
    fn unknown_and_mistyped_keys_fail() {
        let base = || Opts {
            seed: 1,
            clients: vec![],
        };
        assert!(overlay_value(base(), json!({"client": [1]})).unwrap_err().contains("unknown option"));
        assert!(overlay_value(base(), json!({"seed": "x"})).is_err());
        assert!(overlay_value(base(), json!([1])).is_err());
    }

    #[test]
    fn flag_beats_environment() {
        assert_eq!(resolve_seed(Some(7)).unwrap(), 7);
    }
}
