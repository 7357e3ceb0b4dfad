// SPDX-License-Identifier: Apache-2.0

//! Library link placeholders in unlinked bytecode.
//!
//! Two formats exist, both exactly 40 hex characters wide so that an address
//! can be substituted in place:
//!
//! * `__$<34 hex>$__`: the first 34 hex chars of keccak-256 of the fully
//!   qualified library name (`path/File.sol:Lib`), emitted by solc >= 0.5.
//! * `__<name>___...__`: the fully qualified name truncated to 36 chars and
//!   padded with underscores, emitted by older compilers.

use std::ops::Range;

use serde::Serialize;
use thiserror::Error;

use crate::primitives::{keccak256, strip_0x, Address};

pub const PLACEHOLDER_LEN: usize = 40;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlaceholderError {
    #[error("truncated link placeholder at offset {0}")]
    Truncated(usize),
    #[error("invalid hex character {ch:?} at offset {offset}")]
    InvalidHex { offset: usize, ch: char },
    #[error("bytecode has odd length {0}")]
    OddLength(usize),
    #[error("placeholder `{0}` not found in bytecode")]
    NotFound(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(tag = "format", content = "id", rename_all = "camelCase")]
pub enum PlaceholderId {
    /// 34 hex chars of the library name digest.
    Hashed(String),
    /// The 36 characters between the leading and trailing `__`.
    Legacy(String),
}

impl PlaceholderId {
    pub fn for_library(fully_qualified_name: &str) -> Self {
        let digest = hex::encode(keccak256(fully_qualified_name.as_bytes()));
        PlaceholderId::Hashed(digest[..34].to_string())
    }

    pub fn legacy_for_library(fully_qualified_name: &str) -> Self {
        let mut name: String = fully_qualified_name.chars().take(36).collect();
        while name.len() < 36 {
            name.push('_');
        }
        PlaceholderId::Legacy(name)
    }

    /// The 40-character marker as it appears in bytecode.
    pub fn marker(&self) -> String {
        match self {
            PlaceholderId::Hashed(id) => format!("__${id}$__"),
            PlaceholderId::Legacy(name) => format!("__{name}__"),
        }
    }

    /// True when this placeholder stands for the given library.
    pub fn matches_library(&self, fully_qualified_name: &str, contract_name: &str) -> bool {
        match self {
            PlaceholderId::Hashed(_) => *self == PlaceholderId::for_library(fully_qualified_name),
            PlaceholderId::Legacy(_) => {
                *self == PlaceholderId::legacy_for_library(fully_qualified_name)
                    || *self == PlaceholderId::legacy_for_library(contract_name)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LinkPlaceholder {
    /// Character range within the hex string, excluding any `0x` prefix.
    pub span: Range<usize>,
    pub id: PlaceholderId,
    pub resolved_name: Option<String>,
}

/// Finds every placeholder in `bytecode` and checks that everything outside
/// them is hex.
pub fn extract_placeholders(bytecode: &str) -> Result<Vec<LinkPlaceholder>, PlaceholderError> {
    let code = strip_0x(bytecode).as_bytes();
    let mut found = Vec::new();
    let mut i = 0;
    while i < code.len() {
        if code[i..].starts_with(b"__") {
            let end = i + PLACEHOLDER_LEN;
            if end > code.len() {
                return Err(PlaceholderError::Truncated(i));
            }
            let body = &code[i..end];
            let id = if body[2] == b'$' {
                let digest = &body[3..37];
                if !body.ends_with(b"$__") || !digest.iter().all(u8::is_ascii_hexdigit) {
                    return Err(PlaceholderError::Truncated(i));
                }
                PlaceholderId::Hashed(String::from_utf8_lossy(digest).to_ascii_lowercase())
            } else {
                let name = &body[2..38];
                if !body.ends_with(b"__") || !name.iter().all(|b| b.is_ascii_graphic()) {
                    return Err(PlaceholderError::Truncated(i));
                }
                PlaceholderId::Legacy(String::from_utf8_lossy(name).into_owned())
            };
            let resolved_name = match &id {
                PlaceholderId::Legacy(name) => Some(name.trim_end_matches('_').to_string()),
                PlaceholderId::Hashed(_) => None,
            };
            found.push(LinkPlaceholder {
                span: i..end,
                id,
                resolved_name,
            });
            i = end;
        } else if code[i].is_ascii_hexdigit() {
            i += 1;
        } else {
            return Err(PlaceholderError::InvalidHex {
                offset: i,
                ch: code[i] as char,
            });
        }
    }
    if !code.len().is_multiple_of(2) {
        return Err(PlaceholderError::OddLength(code.len()));
    }
    Ok(found)
}

/// Replaces every occurrence of `placeholder` with the lowercase hex of
/// `address`. The output has the same length as the input.
pub fn link_library(
    bytecode: &str,
    placeholder: &PlaceholderId,
    address: &Address,
) -> Result<String, PlaceholderError> {
    let marker = placeholder.marker();
    if !bytecode.contains(&marker) {
        return Err(PlaceholderError::NotFound(marker));
    }
    Ok(bytecode.replace(&marker, &hex::encode(address.as_bytes())))
}
