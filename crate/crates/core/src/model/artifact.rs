// SPDX-License-Identifier: Apache-2.0

//! Compiled contract artifacts: parsed ABI plus (possibly unlinked) bytecode.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::Value;
use thiserror::Error;

use crate::linker::abi::{AbiError, AbiType};
use crate::linker::placeholder::{extract_placeholders, PlaceholderError};
use crate::primitives::Selector;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("cannot read artifact {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("artifact {path} is not valid JSON: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("artifact {path}: malformed ABI: {reason}")]
    MalformedAbi { path: PathBuf, reason: String },
    #[error("artifact {path}: missing `{field}`")]
    MissingField { path: PathBuf, field: &'static str },
    #[error("artifact {path}: bad bytecode: {source}")]
    Bytecode {
        path: PathBuf,
        source: PlaceholderError,
    },
    #[error("artifact `{0}` not found in store")]
    NotFound(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbiParam {
    pub name: String,
    pub ty: AbiType,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbiFunction {
    pub name: String,
    pub inputs: Vec<AbiParam>,
}

impl AbiFunction {
    /// `name(type1,type2,...)` with no spaces.
    pub fn signature(&self) -> String {
        let types: Vec<String> = self.inputs.iter().map(|p| p.ty.to_string()).collect();
        format!("{}({})", self.name, types.join(","))
    }

    pub fn selector(&self) -> Selector {
        Selector::of_signature(&self.signature())
    }

    pub fn input_types(&self) -> Vec<AbiType> {
        self.inputs.iter().map(|p| p.ty.clone()).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ContractAbi {
    /// Constructor parameters; empty when the ABI has no constructor entry.
    pub constructor: Vec<AbiParam>,
    pub functions: Vec<AbiFunction>,
}

impl ContractAbi {
    pub fn constructor_types(&self) -> Vec<AbiType> {
        self.constructor.iter().map(|p| p.ty.clone()).collect()
    }

    pub fn functions_named<'a>(&'a self, name: &str) -> impl Iterator<Item = &'a AbiFunction> + 'a {
        let name = name.to_string();
        self.functions.iter().filter(move |f| f.name == name)
    }

    pub fn parse_json(abi: &Value) -> Result<Self, String> {
        let entries = abi.as_array().ok_or("abi is not an array")?;
        let mut out = ContractAbi::default();
        for entry in entries {
            let kind = entry
                .get("type")
                .and_then(Value::as_str)
                .unwrap_or("function");
            match kind {
                "constructor" => out.constructor = parse_params(entry.get("inputs"))?,
                "function" => {
                    let name = entry
                        .get("name")
                        .and_then(Value::as_str)
                        .ok_or("function entry without name")?;
                    out.functions.push(AbiFunction {
                        name: name.to_string(),
                        inputs: parse_params(entry.get("inputs"))?,
                    });
                }
                "event" | "error" | "fallback" | "receive" => {}
                other => return Err(format!("unknown ABI entry type `{other}`")),
            }
        }
        Ok(out)
    }
}

fn parse_params(inputs: Option<&Value>) -> Result<Vec<AbiParam>, String> {
    let Some(inputs) = inputs else {
        return Ok(Vec::new());
    };
    let inputs = inputs.as_array().ok_or("inputs is not an array")?;
    inputs
        .iter()
        .map(|p| {
            let name = p
                .get("name")
                .and_then(Value::as_str)
                .unwrap_or_default()
                .to_string();
            Ok(AbiParam {
                name,
                ty: parse_param_type(p)?,
            })
        })
        .collect()
}

fn parse_param_type(param: &Value) -> Result<AbiType, String> {
    let ty = param
        .get("type")
        .and_then(Value::as_str)
        .ok_or("parameter without type")?;
    if let Some(suffix) = ty.strip_prefix("tuple") {
        let components = parse_params(param.get("components"))?;
        let inner = format!(
            "({}){suffix}",
            components
                .iter()
                .map(|c| c.ty.to_string())
                .collect::<Vec<_>>()
                .join(",")
        );
        return AbiType::parse(&inner).map_err(|e: AbiError| e.to_string());
    }
    AbiType::parse(ty).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractArtifact {
    pub contract_name: String,
    pub source_name: String,
    pub abi: ContractAbi,
    /// Hex without `0x`; may contain link placeholders.
    pub bytecode: String,
}

impl ContractArtifact {
    /// `sourceName:contractName`, the string solc hashes for placeholders.
    pub fn fully_qualified_name(&self) -> String {
        if self.source_name.is_empty() {
            self.contract_name.clone()
        } else {
            format!("{}:{}", self.source_name, self.contract_name)
        }
    }

    pub fn from_json(path: &Path, json: &Value) -> Result<Self, ArtifactError> {
        let missing = |field| ArtifactError::MissingField {
            path: path.to_path_buf(),
            field,
        };
        let abi_value = json.get("abi").ok_or_else(|| missing("abi"))?;
        let abi =
            ContractAbi::parse_json(abi_value).map_err(|reason| ArtifactError::MalformedAbi {
                path: path.to_path_buf(),
                reason,
            })?;
        let bytecode = json
            .get("bytecode")
            .or_else(|| json.pointer("/evm/bytecode"))
            .ok_or_else(|| missing("bytecode"))?;
        let bytecode = match bytecode {
            Value::String(s) => s.as_str(),
            Value::Object(o) => o
                .get("object")
                .and_then(Value::as_str)
                .ok_or_else(|| missing("bytecode.object"))?,
            _ => return Err(missing("bytecode")),
        };
        let bytecode = crate::primitives::strip_0x(bytecode).to_string();
        extract_placeholders(&bytecode).map_err(|source| ArtifactError::Bytecode {
            path: path.to_path_buf(),
            source,
        })?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let contract_name = json
            .get("contractName")
            .and_then(Value::as_str)
            .map(str::to_string)
            .unwrap_or(stem);
        let source_name = json
            .get("sourceName")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string();
        Ok(ContractArtifact {
            contract_name,
            source_name,
            abi,
            bytecode,
        })
    }
}

/// Reads and parses one artifact file.
pub fn load_artifact(path: &Path) -> Result<ContractArtifact, ArtifactError> {
    let text = fs::read_to_string(path).map_err(|source| ArtifactError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let json: Value = serde_json::from_str(&text).map_err(|source| ArtifactError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    ContractArtifact::from_json(path, &json)
}

/// Artifacts addressed by the bare names used in model files; `Voting`
/// resolves to `<dir>/Voting.json`.
#[derive(Debug, Clone, Default)]
pub struct ArtifactStore {
    dir: Option<PathBuf>,
    loaded: BTreeMap<String, Arc<ContractArtifact>>,
}

impl ArtifactStore {
    pub fn from_dir(dir: impl Into<PathBuf>) -> Self {
        ArtifactStore {
            dir: Some(dir.into()),
            loaded: BTreeMap::new(),
        }
    }

    pub fn in_memory() -> Self {
        ArtifactStore::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, artifact: ContractArtifact) {
        self.loaded.insert(name.into(), Arc::new(artifact));
    }

    /// Loads every `*.json` in the store's directory so later lookups need no
    /// I/O. Returns the number of artifacts loaded.
    pub fn preload(&mut self) -> Result<usize, ArtifactError> {
        let Some(dir) = self.dir.clone() else {
            return Ok(self.loaded.len());
        };
        let entries = fs::read_dir(&dir).map_err(|source| ArtifactError::Io {
            path: dir.clone(),
            source,
        })?;
        for entry in entries.flatten() {
            let path = entry.path();
            if path.extension().is_some_and(|e| e == "json") {
                if let Some(stem) = path.file_stem().map(|s| s.to_string_lossy().into_owned()) {
                    if let std::collections::btree_map::Entry::Vacant(slot) =
                        self.loaded.entry(stem)
                    {
                        slot.insert(Arc::new(load_artifact(&path)?));
                    }
                }
            }
        }
        Ok(self.loaded.len())
    }

    /// Resolves a bare name or a path ending in `.json`.
    pub fn get(&self, reference: &str) -> Result<Arc<ContractArtifact>, ArtifactError> {
        if let Some(a) = self.loaded.get(reference) {
            return Ok(a.clone());
        }
        let path = if reference.ends_with(".json") {
            let p = PathBuf::from(reference);
            match (&self.dir, p.is_relative()) {
                (Some(dir), true) => dir.join(p),
                _ => p,
            }
        } else {
            let dir = self
                .dir
                .as_ref()
                .ok_or_else(|| ArtifactError::NotFound(reference.to_string()))?;
            dir.join(format!("{reference}.json"))
        };
        if !path.exists() {
            return Err(ArtifactError::NotFound(reference.to_string()));
        }
        load_artifact(&path).map(Arc::new)
    }
}
