// SPDX-License-Identifier: Apache-2.0

//! Secrets file: a YAML map from name to secret (usually a hex private key).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{Literal, SecretRef};

#[derive(Debug, Error)]
pub enum SecretError {
    #[error("cannot read secrets file {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("secrets file {0} is readable by other users; chmod 600 it")]
    WorldReadable(PathBuf),
    #[error("secrets file {path} is malformed: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("secret `{0}` is not defined in the secrets file or inputs")]
    Missing(String),
    #[error("environment variable `{0}` is not set")]
    MissingEnv(String),
}

#[derive(Debug, Clone, Default)]
pub struct Secrets {
    values: BTreeMap<String, String>,
}

impl Secrets {
    pub fn new(values: BTreeMap<String, String>) -> Self {
        Secrets { values }
    }

    pub fn load(path: &Path) -> Result<Self, SecretError> {
        check_permissions(path)?;
        let text = std::fs::read_to_string(path).map_err(|source| SecretError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let malformed = |reason: String| SecretError::Malformed {
            path: path.to_path_buf(),
            reason,
        };
        let raw: BTreeMap<String, serde_yaml::Value> =
            serde_yaml::from_str(&text).map_err(|e| malformed(e.to_string()))?;
        let mut values = BTreeMap::new();
        for (k, v) in raw {
            let s = match v {
                serde_yaml::Value::String(s) => s,
                serde_yaml::Value::Number(n) => n.to_string(),
                _ => return Err(malformed(format!("`{k}` is not a scalar"))),
            };
            values.insert(k, s);
        }
        Ok(Secrets { values })
    }

    /// Resolves a reference: secrets file first, then model inputs, then
    /// environment for `{ env: VAR }`.
    pub fn resolve(
        &self,
        reference: &SecretRef,
        inputs: &BTreeMap<String, Literal>,
    ) -> Result<String, SecretError> {
        match reference {
            SecretRef::Inline(raw) => Ok(raw.clone()),
            SecretRef::Env(var) => {
                std::env::var(var).map_err(|_| SecretError::MissingEnv(var.clone()))
            }
            SecretRef::Input(key) => {
                if let Some(v) = self.values.get(key) {
                    return Ok(v.clone());
                }
                match inputs.get(key) {
                    Some(Literal::Str(s)) => Ok(s.clone()),
                    Some(other) => Ok(other.to_string()),
                    None => Err(SecretError::Missing(key.clone())),
                }
            }
        }
    }
}

#[cfg(unix)]
fn check_permissions(path: &Path) -> Result<(), SecretError> {
    use std::os::unix::fs::PermissionsExt;
    let meta = std::fs::metadata(path).map_err(|source| SecretError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if meta.permissions().mode() & 0o004 != 0 {
        return Err(SecretError::WorldReadable(path.to_path_buf()));
    }
    Ok(())
}

#[cfg(not(unix))]
fn check_permissions(_path: &Path) -> Result<(), SecretError> {
    Ok(())
}
