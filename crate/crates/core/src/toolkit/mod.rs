// SPDX-License-Identifier: Apache-2.0

//! Number-of-Tokens (NoT) metric for deployment scripts and models.
//!
//! Comment lines and log lines are dropped, then the text is split on
//! whitespace, `.`, and the structural characters in [`SEPARATORS`].
//! Empty fragments are discarded. The separator set is frozen: changing it
//! changes every historical count.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

/// Non-whitespace characters that split tokens.
pub const SEPARATORS: &[char] = &[
    '.', '(', ')', '{', '}', '[', ']', ':', ',', ';', '=', '"', '\'',
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Yaml,
    Js,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown language `{0}` (expected yaml or js)")]
pub struct UnknownLanguage(pub String);

impl FromStr for Language {
    type Err = UnknownLanguage;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "yaml" | "yml" => Ok(Language::Yaml),
            "js" | "javascript" | "ts" | "typescript" => Ok(Language::Js),
            _ => Err(UnknownLanguage(s.to_string())),
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Language::Yaml => "yaml",
            Language::Js => "js",
        })
    }
}

impl Language {
    /// Guess from a file extension.
    pub fn for_path(path: &Path) -> Option<Self> {
        path.extension()?.to_str()?.parse().ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NotCount {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    pub language: Language,
    pub tokens: usize,
}

/// Removes `/* ... */` spans, keeping line breaks so line structure
/// survives. An unterminated comment runs to the end of the text.
fn strip_block_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("/*") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find("*/") {
            Some(end) => {
                out.extend(after[..end].chars().filter(|c| *c == '\n'));
                rest = &after[end + 2..];
            }
            None => {
                out.extend(after.chars().filter(|c| *c == '\n'));
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

fn is_dropped_line(line: &str, language: Language) -> bool {
    let t = line.trim_start();
    match language {
        Language::Yaml => t.starts_with('#'),
        Language::Js => t.starts_with("//") || t.starts_with("console."),
    }
}

fn split_tokens(line: &str) -> usize {
    line.split(|c: char| c.is_whitespace() || SEPARATORS.contains(&c))
        .filter(|t| !t.is_empty())
        .count()
}

pub fn count_tokens(text: &str, language: Language) -> NotCount {
    let text = match language {
        Language::Js => strip_block_comments(text),
        Language::Yaml => text.to_string(),
    };
    let tokens = text
        .lines()
        .filter(|l| !is_dropped_line(l, language))
        .map(split_tokens)
        .sum();
    NotCount {
        file: None,
        language,
        tokens,
    }
}

pub fn count_file(path: &Path, language: Language) -> std::io::Result<NotCount> {
    let text = std::fs::read_to_string(path)?;
    Ok(NotCount {
        file: Some(path.to_path_buf()),
        ..count_tokens(&text, language)
    })
}
