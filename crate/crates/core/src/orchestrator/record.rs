// SPDX-License-Identifier: Apache-2.0

//! The persisted deployment record and its on-disk store.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::ExecError;
use crate::primitives::{Address, Selector, H256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum EntryStatus {
    Deployed,
    Wired,
    Destroyed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RecordEntry {
    pub address: Address,
    /// Digest of the exact deploy payload (linked bytecode plus arguments).
    pub bytecode_hash: H256,
    pub tx_ids: Vec<H256>,
    pub status: EntryStatus,
}

impl RecordEntry {
    pub fn is_live(&self) -> bool {
        self.status != EntryStatus::Destroyed
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WireEntry {
    pub source: String,
    pub function: String,
    pub target: String,
    pub source_address: Address,
    pub target_address: Address,
    pub tx_id: H256,
}

impl WireEntry {
    pub fn key(source: &str, function: &str, target: &str) -> String {
        format!("{source}:{function}:{target}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FacetRoute {
    pub address: Address,
    pub selectors: Vec<Selector>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DiamondRecord {
    /// Diamond address the routes were cut into.
    pub address: Address,
    pub facets: BTreeMap<String, FacetRoute>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OffchainEntry {
    pub digest: H256,
    pub payload: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(
    tag = "event",
    rename_all = "camelCase",
    rename_all_fields = "camelCase"
)]
pub enum Event {
    Deployed {
        node: String,
        address: Address,
        tx_id: H256,
    },
    Superseded {
        node: String,
        address: Address,
    },
    Wired {
        node: String,
        function: String,
        target: String,
        target_address: Address,
        tx_id: H256,
    },
    DiamondCut {
        diamond: String,
        facet: String,
        removed: bool,
        tx_id: H256,
    },
    Configured {
        node: String,
        digest: H256,
    },
    Destroyed {
        node: String,
        refund_address: Address,
        tx_id: H256,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HistoryEvent {
    pub seq: u64,
    /// Unix milliseconds, or absent under the logical clock.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at: Option<u64>,
    #[serde(flatten)]
    pub event: Event,
}

/// Source of history timestamps. The logical clock stamps nothing, so
/// records depend only on what happened.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Clock {
    #[default]
    Logical,
    System,
}

impl Clock {
    fn now(self) -> Option<u64> {
        match self {
            Clock::Logical => None,
            Clock::System => SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .ok()
                .map(|d| d.as_millis() as u64),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DeploymentRecord {
    pub model_hash: H256,
    pub entries: BTreeMap<String, RecordEntry>,
    pub wiring: BTreeMap<String, WireEntry>,
    pub diamonds: BTreeMap<String, DiamondRecord>,
    pub offchain: BTreeMap<String, OffchainEntry>,
    pub history: Vec<HistoryEvent>,
}

impl DeploymentRecord {
    pub fn new(model_hash: H256) -> Self {
        DeploymentRecord {
            model_hash,
            ..Default::default()
        }
    }

    pub fn live(&self, node: &str) -> Option<&RecordEntry> {
        self.entries.get(node).filter(|e| e.is_live())
    }

    pub fn push(&mut self, clock: Clock, event: Event) {
        let seq = self.history.len() as u64;
        self.history.push(HistoryEvent {
            seq,
            at: clock.now(),
            event,
        });
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serializes")
    }
}

/// `<dir>/<model stem>.katena-state.json` for a model file.
pub fn record_path_for(model: &Path) -> PathBuf {
    let stem = model
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    model.with_file_name(format!("{stem}.katena-state.json"))
}

/// Exclusive handle on a record file. The lock is held until drop.
#[derive(Debug)]
pub struct RecordStore {
    path: PathBuf,
    _lock: File,
}

impl RecordStore {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, ExecError> {
        let path = path.into();
        let mut lock_path = path.clone().into_os_string();
        lock_path.push(".lock");
        let lock_path = PathBuf::from(lock_path);
        let io = |e: std::io::Error| ExecError::Record {
            path: lock_path.clone(),
            reason: e.to_string(),
        };
        let lock = File::options()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&lock_path)
            .map_err(io)?;
        match lock.try_lock() {
            Ok(()) => {}
            Err(std::fs::TryLockError::WouldBlock) => return Err(ExecError::Locked(path)),
            Err(std::fs::TryLockError::Error(e)) => return Err(io(e)),
        }
        Ok(RecordStore { path, _lock: lock })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn dir(&self) -> &Path {
        self.path.parent().unwrap_or(Path::new("."))
    }

    pub fn load(&self) -> Result<Option<DeploymentRecord>, ExecError> {
        let text = match std::fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(self.error(e)),
        };
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| self.error(e))
    }

    /// Writes to a sibling temp file and renames it into place, so readers
    /// never see a torn record.
    pub fn save(&self, record: &DeploymentRecord) -> Result<(), ExecError> {
        write_atomic(&self.path, record.to_json().as_bytes()).map_err(|e| self.error(e))
    }

    fn error(&self, e: impl std::fmt::Display) -> ExecError {
        ExecError::Record {
            path: self.path.clone(),
            reason: e.to_string(),
        }
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.write_all(b"\n")?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}
